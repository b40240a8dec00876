"""Strategy knowledge graph: model, construction and compression."""
