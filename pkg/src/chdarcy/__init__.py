"""Spectral-Galerkin simulator for a Cahn-Hilliard-Darcy tumour-growth
system with nutrient transport, chemotaxis, and active transport."""

__version__ = "0.1.0"
