"""Simulation and closed-form verification of the quantum filtering equation
for a damped harmonic oscillator under heterodyne-type diffusion and photon
counting observation."""

__version__ = "0.1.0"
