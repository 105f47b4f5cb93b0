"""Multi-symplectic Lagrangian gas dynamics in one dimension."""
__version__ = "0.1.0"
