"""Single source for the tool version recorded in artifacts."""

__version__ = "0.1.0"
