"""Closed-loop driving benchmark harness with language instructions and BEV ground truth."""

__version__ = "0.1.0"
