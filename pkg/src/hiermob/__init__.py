"""Hierarchical user-mobility models from Wi-Fi access logs."""
__version__ = "0.1.0"
