"""Successive group decoding and layered-video broadcast over MIMO-OFDM."""

__version__ = "0.1.0"
