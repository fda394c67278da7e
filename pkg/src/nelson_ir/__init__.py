"""Infrared-regular representation of the massless Nelson model at finite truncation."""

__version__ = "0.1.0"
