"""Hidden-failure protection modeling and quasi-steady-state cascade analysis."""

__version__ = "0.1.0"
