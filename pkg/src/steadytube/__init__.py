"""Steady states of hyperbolic-parabolic conservation laws on the unit interval.

Shooting solvers for inflow/outflow boundary value problems, Evans-function
stability diagnostics and small/large viscosity asymptotics for gas dynamics.
"""
__version__ = "0.1.0"
