"""Propagator kernels on product cones with inverse-square potentials."""
__version__ = "0.1.0"
