"""Binary classification from unlabeled bags given one known prior order."""

__version__ = "0.1.0"
