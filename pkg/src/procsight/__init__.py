"""Predictive process monitoring with interpretation and audit tooling."""

__version__ = "0.1.0"
