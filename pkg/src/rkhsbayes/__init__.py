"""Kernel regularized function estimation under general noise models."""

__version__ = "0.1.0"
