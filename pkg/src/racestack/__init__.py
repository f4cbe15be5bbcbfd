"""Headless scaled autonomous racing stack and simulation harness."""

__version__ = "0.1.0"
