"""Counterfactual-augmented vulnerability detection on mini-C code property graphs."""

from .dataset import Label, Provenance, SourceFunction

__version__ = "0.1.0"

__all__ = ["Label", "Provenance", "SourceFunction", "__version__"]
