"""Magnetic horizontal Laplacians on flat tori and Heisenberg nilmanifolds."""

__version__ = "0.1.0"
