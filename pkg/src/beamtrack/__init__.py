"""Beam tracking for mobile mmWave links from compressive phase-less measurements."""

__version__ = "0.1.0"
