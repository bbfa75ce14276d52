"""Floquet-engineered chiral spin currents in a driven atom-cavity ring."""

__version__ = "0.1.0"
