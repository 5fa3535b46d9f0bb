"""Weak-form sparse identification of controlled dynamics and model-predictive control."""
__version__ = "0.1.0"
