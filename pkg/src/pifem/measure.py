"""Finite Borel measures on [0, T] made of Dirac atoms plus a density.

Time steps own the half-open interval ``(t_{n-1}, t_n]``.  An atom sitting
exactly at ``t = 0`` therefore belongs to no step and never forces the
discrete problem.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import AtomOutsideInterval, BadInterval

_QUAD_TOL = 1e-12


def _integrate(fn, a, b, points=None):
    if b <= a:
        return 0.0
    if points is not None:
        points = [p for p in points if a < p < b] or None
    val, _ = quad(fn, a, b, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200, points=points)
    return float(val)


@dataclass(frozen=True)
class TimeMeasure:
    """``sigma = sum_i w_i delta_{t_i} + density(t) dt`` on ``[0, T]``."""

    T: float
    atoms: tuple[tuple[float, float], ...] = ()
    density: Callable[[float], float] | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        atoms = tuple(sorted((float(t), float(w)) for t, w in self.atoms))
        for t, _ in atoms:
            if not 0.0 <= t <= self.T:
                raise AtomOutsideInterval(f"atom at t={t} outside [0, {self.T}]")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def dirac(cls, t, T, weight=1.0):
        return cls(T, ((t, weight),))

    @classmethod
    def lebesgue(cls, T, value=1.0):
        return cls(T, (), lambda t: value)

    def density_integral(self, a, b, absolute=False):
        if self.density is None:
            return 0.0
        fn = (lambda t: abs(self.density(t))) if absolute else self.density
        return _integrate(fn, a, b)

    def total_mass(self):
        """Signed mass ``sigma([0, T])``."""
        return sum(w for _, w in self.atoms) + self.density_integral(0.0, self.T)


def total_variation(sigma: TimeMeasure) -> float:
    """Total variation norm: ``sum |w_i| + int_0^T |density|``."""
    return sum(abs(w) for _, w in sigma.atoms) + sigma.density_integral(0.0, sigma.T, absolute=True)


def step_mass(sigma: TimeMeasure, a: float, b: float):
    """Restriction of ``sigma`` to ``(a, b]``: ``(atoms, density mass)``."""
    if not (0.0 <= a < b <= sigma.T * (1 + 1e-14)):
        raise BadInterval(f"bad interval ({a}, {b}] for T={sigma.T}")
    atoms = [(t, w) for t, w in sigma.atoms if a < t <= b]
    return atoms, sigma.density_integral(a, b)


def pair_measure(f, sigma: TimeMeasure, v, mesh, rule=None) -> float:
    """``int_0^T (f(., t), v(., t))_Omega dsigma(t)``.

    ``f(points, t)`` and ``v`` are evaluated at the spatial quadrature points
    of ``mesh``; ``v`` is either an analytic ``v(points, t)`` or a
    :class:`~pifem.solver.Trajectory` (linear interpolation in time).
    """
    from .assembly import ORDER4, quadrature_points

    rule = rule or ORDER4
    X, W = quadrature_points(mesh, rule)
    breaks = None
    if hasattr(v, "evaluate"):
        traj = v
        breaks = list(traj.times)

        def v_at(t):
            return traj.evaluate(X, t)
    else:
        def v_at(t):
            return np.asarray(v(X, t), dtype=float)

    def inner(t):
        return float(W @ (np.asarray(f(X, t), dtype=float) * v_at(t)))

    total = 0.0
    for t, w in sigma.atoms:
        total += w * inner(t)
    if sigma.density is not None:
        total += _integrate(lambda t: sigma.density(t) * inner(t), 0.0, sigma.T, points=breaks)
    return total
