"""Feature schema construction and streaming extraction."""
