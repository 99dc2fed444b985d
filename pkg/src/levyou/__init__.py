"""Numerical toolkit for Ornstein-Uhlenbeck processes driven by Levy noise."""

__version__ = "0.1.0"
