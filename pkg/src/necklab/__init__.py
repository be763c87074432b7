"""Numerical tools for rotationally symmetric mean curvature flow: curvature
spectra, model solutions, a profile flow solver, neck and cap recognition,
noncollapsing measurements and explicit constants."""

__version__ = "0.1.0"
