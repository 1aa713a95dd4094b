"""Gaussian-process error models and abstention for black-box binary classifiers."""

__version__ = "0.1.0"
