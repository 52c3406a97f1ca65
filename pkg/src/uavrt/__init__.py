"""Ray-tracing simulator for time-variant UAV air-to-ground mmWave channels."""

__version__ = "0.1.0"
