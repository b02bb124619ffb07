"""Laboratory for experimental asset markets with scripted and LLM traders."""

__version__ = "0.1.0"
