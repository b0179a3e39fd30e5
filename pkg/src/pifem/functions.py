"""Closed-form data and exact solutions, plus the named registry used by configs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KinkSolution:
    """Radial solution of ``-div(beta grad u) = -9 r`` with a gradient kink at ``r0``.

    ``u = r^3 / beta1`` inside and ``r^3 / beta2 + r0^3 (1/beta1 - 1/beta2)``
    outside, so both ``u`` and the flux ``beta du/dr = 3 r^2`` are continuous
    across the circle while ``grad u`` jumps when ``beta1 != beta2``.
    """

    r0: float = 0.5
    beta1: float = 1.0
    beta2: float = 10.0
    center: tuple[float, float] = (0.0, 0.0)

    def _r(self, x):
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        return d, np.hypot(d[..., 0], d[..., 1])

    def value(self, x):
        _, r = self._r(x)
        inner = r**3 / self.beta1
        outer = r**3 / self.beta2 + self.r0**3 * (1 / self.beta1 - 1 / self.beta2)
        return np.where(r <= self.r0, inner, outer)

    __call__ = value

    def gradient(self, x):
        d, r = self._r(x)
        c = np.where(r <= self.r0, 3 * r / self.beta1, 3 * r / self.beta2)
        return c[..., None] * d

    def flux(self, x):
        """``beta grad u = 3 r (x - center)``, smooth across the interface."""
        d, r = self._r(x)
        return 3 * r[..., None] * d

    def source(self, x):
        _, r = self._r(x)
        return -9.0 * r

    def one_sided_fluxes(self, theta):
        """Normal flux from inside and outside at the interface points ``theta``."""
        n = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        p = np.asarray(self.center) + self.r0 * n
        d = p - np.asarray(self.center)
        r = np.hypot(d[..., 0], d[..., 1])
        inner = self.beta1 * ((3 * r / self.beta1)[..., None] * d * n).sum(-1)
        outer = self.beta2 * ((3 * r / self.beta2)[..., None] * d * n).sum(-1)
        return inner, outer

    def one_sided_values(self, theta):
        """Limits of ``u`` from inside and outside (constant on the circle)."""
        r = np.full(np.shape(theta), self.r0)
        return r**3 / self.beta1, r**3 / self.beta2 + self.r0**3 * (1 / self.beta1 - 1 / self.beta2)


def bump(x, t=0.0):
    """``sin(pi x) sin(pi y)``; vanishes on the boundary of [-1,1]^2 and [0,1]^2."""
    x = np.asarray(x, dtype=float)
    return np.sin(math.pi * x[..., 0]) * np.sin(math.pi * x[..., 1])


def bump_gradient(x, t=0.0):
    x = np.asarray(x, dtype=float)
    sx, sy = np.sin(math.pi * x[..., 0]), np.sin(math.pi * x[..., 1])
    cx, cy = np.cos(math.pi * x[..., 0]), np.cos(math.pi * x[..., 1])
    return math.pi * np.stack([cx * sy, sx * cy], axis=-1)


def manufactured_source(x, t):
    """Source for ``u = t sin(pi x) sin(pi y)`` with unit diffusion."""
    return (1.0 + 2.0 * math.pi**2 * t) * bump(x)


def manufactured_solution(x, t):
    return t * bump(x)


def zero(x, t=0.0):
    return np.zeros(np.shape(x)[0])


def one(x, t=0.0):
    return np.ones(np.shape(x)[0])


def _kink_registry(r0, beta1, beta2):
    k = KinkSolution(r0, beta1, beta2)
    return {
        "kink": lambda x, t=0.0: k.value(x),
        "kink_source": lambda x, t=0.0: k.source(x),
    }


def space_time_registry(r0=0.5, beta1=1.0, beta2=10.0):
    """Named functions ``fn(points, t)`` available to configuration files."""
    reg = {
        "zero": zero,
        "one": one,
        "sin_bump": bump,
        "manufactured_source": manufactured_source,
        "manufactured_solution": manufactured_solution,
    }
    reg.update(_kink_registry(r0, beta1, beta2))
    return reg


def density_from_registry(name, coeffs=()):
    """Time densities allowed in measure specifications."""
    coeffs = [float(c) for c in coeffs]
    if name == "none":
        return None
    if name == "constant":
        value = coeffs[0] if coeffs else 1.0
        return lambda t: value
    if name == "polynomial":
        if not coeffs:
            raise KeyError("polynomial density needs coefficients")
        return lambda t: sum(c * t**k for k, c in enumerate(coeffs))
    if name == "sine":
        defaults = [1.0, math.pi]
        amp, omega = (coeffs + defaults[len(coeffs):])[:2]
        return lambda t: amp * math.sin(omega * t)
    raise KeyError(name)


DENSITY_NAMES = ("none", "constant", "polynomial", "sine")
