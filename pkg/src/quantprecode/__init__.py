"""Desk-scale simulator for coarsely quantized massive MIMO downlink precoding."""

__version__ = "0.1.0"
