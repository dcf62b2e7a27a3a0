"""Proximal point and semismooth Newton solvers for matrix + vector regression."""

__version__ = "0.1.0"
