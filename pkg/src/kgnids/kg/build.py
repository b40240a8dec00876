"""Repository crawling and LLM-driven strategy extraction.

The extraction protocol is: one structured pass over the repository text,
followed by up to ``max_gleaning_rounds`` rounds in which the model is asked a
YES/NO question about missed strategies and, on YES, for the missed ones.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .clients import ChatClient, SearchClient
from .core import FamilyNode, KnowledgeGraph, RepositoryNode, StrategyNode, validate

logger = logging.getLogger(__name__)


@dataclass
class SearchQuery:
    family: str
    base_keywords: list
    variations: list = field(default_factory=list)

    def __post_init__(self):
        if not self.base_keywords:
            raise ValueError(f"query for {self.family!r} needs at least one base keyword")

    def keywords(self) -> list[str]:
        if not self.variations:
            return list(self.base_keywords)
        return [f"{b} {v}" for b in self.base_keywords for v in self.variations]


# keyword table used for the three studied families
DEFAULT_QUERIES = [
    SearchQuery("TCP DoS", ["TCP"], ["Flood", "DoS", "Denial of Service", "Attack"]),
    SearchQuery("HTTP DoS", ["HTTP", "HTTP GET", "HTTP POST", "HTTP Request"],
                ["Flood", "DoS", "Denial of Service", "Attack", "Bombardment", "Overload"]),
    SearchQuery("SSH Brute Force",
                ["SSH Dictionary", "SSH Brute Force", "SSH Brute-Force", "SSH Password Guessing",
                 "SSH Password Cracking", "SSH", "SSH Login Guessing", "SSH Password Spraying"],
                ["Attack", "Technique", "Method", "Tool", "Hack", "Crack", "Attempt", "Threat",
                 "Vulnerability", "Exploit", "Breach", "Brute Force", "Dictionary Attack"]),
]


@dataclass
class RepoDocument:
    repo_uri: str
    title: str = ""
    description: str = ""
    readme_body: str = ""
    code_excerpts: list = field(default_factory=list)

    def __post_init__(self):
        if not self.repo_uri:
            raise ValueError("repo_uri must be non-empty")

    def has_text(self) -> bool:
        return any(s.strip() for s in [self.readme_body, *self.code_excerpts])


class Relevance(str, enum.Enum):
    RELEVANT = "RELEVANT"
    IRRELEVANT = "IRRELEVANT"
    EMPTY = "EMPTY"


@dataclass
class ExtractionResult:
    strategies: list            # [(name, description)]
    relevance: Relevance
    gleaning_rounds_used: int = 0

    def __post_init__(self):
        if self.relevance is not Relevance.RELEVANT and self.strategies:
            raise ValueError(f"{self.relevance.value} result cannot carry strategies")


class ExtractionError(RuntimeError):
    def __init__(self, message, raw_output):
        self.raw_output = raw_output
        super().__init__(message)


@dataclass
class ExtractionConfig:
    max_gleaning_rounds: int = 3
    repair_attempts: int = 1
    max_readme_chars: int = 20000
    yes_no_logit_bias: dict | None = None


def _norm(text: str) -> str:
    return re.sub(r"[\s_\-]+", " ", text.lower()).strip()


def search_repositories(query: SearchQuery, client: SearchClient) -> list[RepoDocument]:
    """Search every keyword of ``query``; return de-duplicated, keyword-matching stubs."""
    bases = [_norm(b) for b in query.base_keywords]
    seen = {}
    for keyword in query.keywords():
        for hit in client.search(keyword):
            if not hit.uri or hit.uri in seen:
                continue
            haystack = _norm(f"{hit.title} {hit.description}")
            if any(b in haystack for b in bases):
                seen[hit.uri] = RepoDocument(hit.uri, hit.title, hit.description)
    return list(seen.values())


def fetch_document(stub: RepoDocument, client: SearchClient) -> RepoDocument:
    stub.readme_body = client.readme(stub.repo_uri)
    return stub


# -- prompts -------------------------------------------------------------------

SYSTEM_PROMPT = """You read the documentation of attack tools and list the attack strategies they implement.
A strategy is a configurable capability of the tool, usually a command-line option or flag.
Record that an option exists; never record the value it was set to.

Reply with a single JSON object:
{"relevant": true|false, "strategies": [{"name": "...", "description": "..."}]}

"relevant" is false when the repository is not an attack tool for the stated attack family.
"strategies" is empty when the text names no configurable options.

Example (options listed explicitly):
  $ python flood.py [-p1] [-p2]
  options:
     -p1: randomise source ports
     -p2: send fragmented packets
  -> {"relevant": true, "strategies": [{"name": "-p1", "description": "randomise source ports"},
                                       {"name": "-p2", "description": "send fragmented packets"}]}

Example (options described in prose):
  This script floods the target and can optionally spoof the source address.
  -> {"relevant": true, "strategies": [{"name": "spoof source address",
                                        "description": "forge the source IP of flood packets"}]}

Example (no options):
  Usage: $ python script.py
  -> {"relevant": true, "strategies": []}

Example (unrelated project):
  A lightweight HTTP proxy that pools connections to a Redis server.
  -> {"relevant": false, "strategies": []}
"""

CONTINUE_PROMPT = ("Some strategies may have been missed in the previous answer. "
                   "Are there still strategies to add? Answer YES or NO.")
GLEAN_PROMPT = ("Some strategies were missed in the previous answer. List only the missed ones, "
                "using the same JSON format.")
REPAIR_PROMPT = ("Your previous reply could not be parsed ({error}). "
                 "Reply again with only the JSON object.")


def _doc_message(family: str, doc: RepoDocument, cfg: ExtractionConfig) -> str:
    parts = [f"Attack family: {family}", f"Repository: {doc.repo_uri}",
             f"Title: {doc.title}", f"Description: {doc.description}",
             "README:", doc.readme_body[:cfg.max_readme_chars]]
    for i, chunk in enumerate(doc.code_excerpts):
        parts += [f"Code excerpt {i + 1}:", chunk]
    return "\n".join(parts)


_FLAG_WITH_VALUE = re.compile(r"^(-{1,2}[A-Za-z0-9][\w.\-]*)\s*(?:[=:]\s*\S.*|\s+\S.*)?$")


def strip_parameter_value(name: str) -> str:
    """``--keep-alive=1`` -> ``--keep-alive``; names that are not flags pass through."""
    name = name.strip()
    m = _FLAG_WITH_VALUE.match(name)
    return m.group(1) if m else name


def _strategy_key(name: str) -> str:
    return _norm(name.lstrip("-"))


def parse_extraction(raw: str) -> tuple[bool, list[tuple[str, str]]]:
    text = raw.strip()
    fence = re.search(r"```(?:json)?\s*(.*?)```", text, re.S)
    if fence:
        text = fence.group(1)
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end < start:
        raise ValueError("no JSON object found")
    obj = json.loads(text[start:end + 1])
    if not isinstance(obj, dict):
        raise ValueError("top level is not an object")
    relevant = obj.get("relevant", True)
    if not isinstance(relevant, bool):
        raise ValueError("'relevant' must be a boolean")
    items = obj.get("strategies", [])
    if not isinstance(items, list):
        raise ValueError("'strategies' must be a list")
    out = []
    for item in items:
        if not isinstance(item, dict) or not isinstance(item.get("name"), str) or not item["name"].strip():
            raise ValueError(f"malformed strategy entry {item!r}")
        out.append((strip_parameter_value(item["name"]), str(item.get("description") or "").strip()))
    return relevant, out


def _ask_json(lm: ChatClient, messages: list, cfg: ExtractionConfig):
    raw = lm.complete(messages, json_mode=True)
    for attempt in range(cfg.repair_attempts + 1):
        try:
            parsed = parse_extraction(raw)
            messages.append({"role": "assistant", "content": raw})
            return parsed
        except ValueError as exc:
            if attempt == cfg.repair_attempts:
                raise ExtractionError(f"unparseable model output: {exc}", raw) from exc
            messages.append({"role": "assistant", "content": raw})
            messages.append({"role": "user", "content": REPAIR_PROMPT.format(error=exc)})
            raw = lm.complete(messages, json_mode=True)


def extract_strategies(doc: RepoDocument, lm: ChatClient, config: ExtractionConfig | None = None,
                       family: str = "") -> ExtractionResult:
    cfg = config or ExtractionConfig()
    if not doc.has_text():
        return ExtractionResult([], Relevance.EMPTY, 0)

    messages = [{"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": _doc_message(family, doc, cfg)}]
    relevant, found = _ask_json(lm, messages, cfg)
    if not relevant:
        return ExtractionResult([], Relevance.IRRELEVANT, 0)

    strategies = {}
    for name, desc in found:
        strategies.setdefault(_strategy_key(name), (name, desc))

    rounds = 0
    while rounds < cfg.max_gleaning_rounds:
        rounds += 1
        messages.append({"role": "user", "content": CONTINUE_PROMPT})
        answer = lm.complete(messages, max_tokens=1, logit_bias=cfg.yes_no_logit_bias)
        messages.append({"role": "assistant", "content": answer})
        if not answer.strip().upper().startswith("Y"):
            break
        messages.append({"role": "user", "content": GLEAN_PROMPT})
        _, extra = _ask_json(lm, messages, cfg)
        for name, desc in extra:
            strategies.setdefault(_strategy_key(name), (name, desc))

    items = list(strategies.values())
    return ExtractionResult(items, Relevance.RELEVANT if items else Relevance.EMPTY, rounds)


# -- repository graphs ---------------------------------------------------------

def slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_") or "x"


def family_node(name: str) -> FamilyNode:
    return FamilyNode(f"family:{slug(name)}", name)


def repo_id_for(family: FamilyNode, uri: str) -> str:
    path = re.sub(r"^[a-z]+://(www\.)?(github\.com/)?", "", uri.strip().rstrip("/"), flags=re.I)
    return f"repo:{family.id.split(':', 1)[1]}:{path}"


def build_repository_graph(family: FamilyNode, doc: RepoDocument,
                           result: ExtractionResult) -> KnowledgeGraph:
    if result.relevance is not Relevance.RELEVANT:
        raise ValueError(f"cannot build a repository graph from a {result.relevance.value} result "
                         f"({doc.repo_uri})")
    g = KnowledgeGraph()
    g.add_node(family)
    repo = RepositoryNode(repo_id_for(family, doc.repo_uri), doc.repo_uri, family.id)
    g.add_node(repo)
    used = set()
    for name, desc in result.strategies:
        base = f"{repo.id}#{slug(name)}"
        sid, n = base, 1
        while sid in used:
            n += 1
            sid = f"{base}_{n}"
        used.add(sid)
        g.add_node(StrategyNode(sid, name, desc, family.id, repo.id))
    problems = validate(g)
    if problems:
        raise ValueError("; ".join(problems))
    return g


@dataclass
class CrawlOutcome:
    uri: str
    family: str
    relevance: str
    strategies: int
    error: str = ""


def crawl(queries: list[SearchQuery], search: SearchClient, lm: ChatClient,
          config: ExtractionConfig | None = None, workers: int = 4,
          fetch_readmes: bool = True) -> tuple[KnowledgeGraph, list[CrawlOutcome]]:
    """Search, fetch, extract and merge every repository into one graph."""
    graph = KnowledgeGraph()
    outcomes = []
    for query in queries:
        fam = family_node(query.family)
        if fam.id not in graph.nodes:
            graph.add_node(fam)
        docs = search_repositories(query, search)
        logger.info("%s: %d repositories", query.family, len(docs))

        def work(doc):
            try:
                if fetch_readmes:
                    fetch_document(doc, search)
                return doc, extract_strategies(doc, lm, config, family=query.family), None
            except Exception as exc:  # one bad repository must not sink the crawl
                logger.warning("extraction failed for %s: %s", doc.repo_uri, exc)
                return doc, None, exc

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(pool.map(work, docs))
        for doc, result, exc in results:
            if result is None:
                outcomes.append(CrawlOutcome(doc.repo_uri, query.family, "ERROR", 0, str(exc)))
                continue
            outcomes.append(CrawlOutcome(doc.repo_uri, query.family, result.relevance.value,
                                         len(result.strategies)))
            if result.relevance is Relevance.RELEVANT:
                graph.merge(build_repository_graph(fam, doc, result))
    return graph, outcomes
