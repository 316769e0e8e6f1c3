"""Benchmark factory and evaluation harness for region-focal facial description."""

__version__ = "0.1.0"
