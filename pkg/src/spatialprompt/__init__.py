"""Sketch documents, spatial constraint compilation, constrained 3D generation,
mesh validation, and a collaborative editing session protocol."""

__version__ = "0.1.0"
