"""Solver and verification toolkit for the form-type Calabi-Yau equation on complex tori."""

__version__ = "0.1.0"
