"""Agile-constellation flood observation simulator.

Deterministic, seeded simulation of satellite constellations observing
evolving floods: orbital coverage, slew maneuvering, delay-tolerant bundle
exchange, observation-responsive value prediction, dynamic-programming
scheduling, and onboard-vs-ground planning comparisons.
"""

__version__ = "0.1.0"
