"""Simulation and tomography of a polarization-maintaining fiber-loop photon-pair source."""

__version__ = "0.1.0"
