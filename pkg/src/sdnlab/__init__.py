"""SDN routing laboratory: NSFNET simulation, path telemetry, traffic classifiers and AI routing."""

__version__ = "0.1.0"
