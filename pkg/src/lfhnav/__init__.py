"""Learning-from-hallucination navigation workbench."""

__version__ = "0.1.0"
