"""Evidence-grounded heterogeneous knowledge graphs over EHR code sequences."""

__version__ = "0.1.0"
