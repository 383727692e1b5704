"""Steady-state correlations and dissipative criticality of quasi-free chains."""
__version__ = "0.1.0"
