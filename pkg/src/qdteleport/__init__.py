"""Simulation and analysis of photonic teleportation between two dissimilar
quantum-dot sources: emitter physics, two-photon interference, the
teleportation channel, time-tag event processing and tomography."""

__version__ = "0.1.0"
