"""Strategy-to-feature catalog.

The catalog is an INI file.  Each section is one feature; the section name is
the feature name.  Keys:

``pattern``   regular expression searched in the normalized strategy name
``expr``      value expression (see :mod:`kgnids.features.expr`)
``when``      optional boolean guard; the feature only updates when it holds
``scope``     ``channel`` (default) or ``destination``
``category``  free-form grouping label
``alias``     short token used when naming composite features

Sections are tried in file order and the first matching pattern wins, so
specific patterns belong above general ones.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .expr import Expression, ExpressionError, conjoin

SCOPES = ("channel", "destination")
_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")


class CatalogError(ValueError):
    def __init__(self, message: str, source: str = "<catalog>", line: int | None = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def normalize_name(name: str) -> str:
    """Lower-case, split camelCase, turn option punctuation into single spaces."""
    s = re.sub(r"([a-z0-9])([A-Z])", r"\1 \2", name.strip())
    s = re.sub(r"[^a-z0-9]+", " ", s.lower())
    return " ".join(s.split())


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    pattern: str
    expr: str
    when: str | None = None
    scope: str = "channel"
    category: str = ""
    alias: str = ""

    def __post_init__(self):
        if not self.pattern.strip():
            raise ValueError(f"{self.name}: empty pattern")
        if not _NAME_RE.match(self.name):
            raise ValueError(f"bad feature name {self.name!r}")
        if self.scope not in SCOPES:
            raise ValueError(f"{self.name}: scope must be one of {SCOPES}")
        re.compile(self.pattern)
        Expression(self.expr)
        if self.when is not None and not Expression(self.when).is_boolean:
            raise ExpressionError(f"{self.name}: guard {self.when!r} is not boolean")
        if not self.alias:
            object.__setattr__(self, "alias", self.name)

    def matches(self, strategy_name: str) -> bool:
        return re.search(self.pattern, normalize_name(strategy_name)) is not None

    def condition(self) -> Expression | None:
        """Boolean form of the entry, or None for purely numeric features."""
        value = Expression(self.expr)
        guard = Expression(self.when) if self.when else None
        if value.is_boolean:
            return conjoin(guard, value) if guard else value
        return guard


class Catalog:
    def __init__(self, entries: list[CatalogEntry], source: str = "<catalog>"):
        seen = set()
        for e in entries:
            if e.name in seen:
                raise CatalogError(f"duplicate feature {e.name}", source)
            seen.add(e.name)
        self.entries = list(entries)
        self.source = source
        self._position = {e.name: i for i, e in enumerate(self.entries)}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, name) -> CatalogEntry:
        return self.entries[self._position[name]]

    def position(self, name: str) -> int:
        return self._position[name]

    def match(self, strategy_name: str) -> CatalogEntry | None:
        key = normalize_name(strategy_name)
        for e in self.entries:
            if re.search(e.pattern, key):
                return e
        return None

    def categories(self) -> dict:
        out = {}
        for e in self.entries:
            out.setdefault(e.category, []).append(e.name)
        return out

    @classmethod
    def parse(cls, text: str, source: str = "<catalog>") -> "Catalog":
        cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise CatalogError(str(exc).splitlines()[0], source, line) from None
        lines = {}
        for no, raw in enumerate(text.splitlines(), 1):
            m = re.match(r"^\s*\[([^\]]+)\]", raw)
            if m:
                lines[m.group(1).strip()] = no
        entries = []
        for name in cp.sections():
            sec = cp[name]
            unknown = set(sec) - {"pattern", "expr", "when", "scope", "category", "alias"}
            if unknown:
                raise CatalogError(f"[{name}] unknown key(s) {sorted(unknown)}", source, lines.get(name))
            for key in ("pattern", "expr"):
                if key not in sec:
                    raise CatalogError(f"[{name}] missing key {key!r}", source, lines.get(name))
            try:
                entries.append(CatalogEntry(
                    name=name, pattern=sec["pattern"].strip(), expr=sec["expr"].strip(),
                    when=sec.get("when", "").strip() or None, scope=sec.get("scope", "channel").strip(),
                    category=sec.get("category", "").strip(), alias=sec.get("alias", "").strip()))
            except (ValueError, re.error) as exc:
                raise CatalogError(f"[{name}] {exc}", source, lines.get(name)) from None
        return cls(entries, source)

    @classmethod
    def load(cls, path) -> "Catalog":
        return cls.parse(Path(path).read_text(encoding="utf-8"), str(path))

    @classmethod
    def default(cls) -> "Catalog":
        text = resources.files(__package__).joinpath("default_catalog.ini").read_text(encoding="utf-8")
        return cls.parse(text, "default_catalog.ini")
