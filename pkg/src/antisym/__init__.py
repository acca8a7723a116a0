"""Bi-Lipschitz alternating-group invariant features for antisymmetric regression."""
__version__ = "0.1.0"
