"""Toolkit for building and scoring a multimodal NACE industry-classification benchmark."""

__version__ = "0.1.0"
