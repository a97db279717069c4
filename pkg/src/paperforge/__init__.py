"""paperforge: multi-agent research-manuscript generation and evaluation."""

__version__ = "0.1.0"
