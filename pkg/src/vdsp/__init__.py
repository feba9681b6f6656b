"""Voltage-dependent synaptic plasticity in clock-driven spiking networks."""

__version__ = "0.1.0"
