"""Path choice estimation for metro networks from smart card (AFC) records."""

__version__ = "0.1.0"
