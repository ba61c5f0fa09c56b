"""Conditional hierarchical VAE for multi-lead ECG synthesis, built on a small numpy autograd core."""

__version__ = "0.1.0"
