"""Generator-enhanced optimization with an MPS Born machine."""
__version__ = "0.1.0"
