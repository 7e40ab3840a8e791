"""Pairwise synthesis of concurrent programs from temporal-logic pair specifications."""

__version__ = "0.1.0"
