"""Part detector discovery via per-channel input gradients of a CNN."""

__version__ = "0.1.0"
