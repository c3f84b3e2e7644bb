"""Fully-implicit thermal multi-component reservoir simulator."""

__version__ = "0.1.0"
