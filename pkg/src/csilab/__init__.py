"""Simulation and inference of remote-site CSI from local CSI."""
__version__ = "0.1.0"
