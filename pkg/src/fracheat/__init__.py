"""Numerical lab for the heat equation on (0, 1) driven by fractional Brownian motion.

Submodules: :mod:`~fracheat.spectral` (sine basis and semigroup),
:mod:`~fracheat.fbm` (drivers and the Cameron-Martin space),
:mod:`~fracheat.young` (convolutional Young integrals),
:mod:`~fracheat.solver` (mild solutions), :mod:`~fracheat.malliavin`
(derivatives of the solution map), :mod:`~fracheat.density` (ensembles) and
:mod:`~fracheat.cli`.
"""

__version__ = "0.1.0"
