"""Decentralized nonconvex-strongly-concave min-max optimization over networks."""

__version__ = "0.1.0"
