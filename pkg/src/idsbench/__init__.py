"""Intrusion-detection classifier benchmarking on NSL-KDD-format data."""

__version__ = "0.1.0"
