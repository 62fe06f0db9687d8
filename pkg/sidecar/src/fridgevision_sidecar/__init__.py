"""Reference inference sidecar for the grocery-tracking pipeline."""

__version__ = "0.1.0"
