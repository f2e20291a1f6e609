"""Simulation and analysis of cavity-enhanced quantum-dot single-photon sources."""

__version__ = "0.1.0"
