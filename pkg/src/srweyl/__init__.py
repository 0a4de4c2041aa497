"""Exact rigidity certificates for sub-Riemannian structures given by polynomial frames."""

__version__ = "0.1.0"
