"""adaskip: load-adaptive inference via stochastic-depth training and
design-time skip configurations."""

__version__ = "0.1.0"
