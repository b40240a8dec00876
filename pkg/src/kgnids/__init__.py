"""Knowledge-graph guided feature construction for network intrusion detection."""

__version__ = "0.1.0"
