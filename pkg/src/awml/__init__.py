"""Active world model learning with progress-based curiosity."""
__version__ = "0.1.0"
