"""Concentration inference from ambient and physical sensing streams."""

__version__ = "0.1.0"
