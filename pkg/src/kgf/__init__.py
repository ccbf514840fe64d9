"""Clinical knowledge-graph construction, grounding and validation toolkit."""

__version__ = "0.1.0"
