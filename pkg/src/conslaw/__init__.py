"""Exact computation of conservation laws for gradient flows of reparametrized models."""

__version__ = "0.1.0"
