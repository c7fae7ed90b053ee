"""Steane-code fault-path fidelity simulator."""

__version__ = "1.0.0"
