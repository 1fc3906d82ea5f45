"""Desk-scale multi-talker neural transducer laboratory."""

__version__ = "0.1.0"
