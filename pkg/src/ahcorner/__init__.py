"""Numerical toolkit for the positive mass theorem on asymptotically
hyperbolic manifolds with corners.

The pipeline glues two rotationally symmetric metrics along a sphere,
smooths the corner, solves the perturbed eigenfunction equation
``-Δv + nv + fv = w``, conformally deforms, and tracks the mass aspect.
"""

__version__ = "0.1.0"
