"""Action-informativeness diagnostics for offline treatment data."""

__version__ = "1.0.0"
