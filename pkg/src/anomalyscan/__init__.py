"""Cross-sectional contrarian/momentum research engine."""
__version__ = "0.1.0"
