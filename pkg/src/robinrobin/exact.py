"""Closed-form heat-equation solutions used as manufactured data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Horizontal, InterfaceSpec, Slanted


def interface_normal(spec: InterfaceSpec) -> np.ndarray:
    """Unit normal of the interface pointing from the fluid (below) into the solid."""
    if isinstance(spec, Horizontal):
        return np.array([0.0, 1.0])
    if isinstance(spec, Slanted):
        n = np.array([-(spec.y_right - spec.y_left), 1.0])
        return n / np.linalg.norm(n)
    raise TypeError(f"unknown interface spec {spec!r}")


@dataclass(frozen=True)
class CosSinMode:
    """``exp(-2 pi^2 nu t) cos(pi x) sin(pi y)``.

    Solves ``u_t = nu * Laplace(u)`` on the whole square, vanishes on y=0 and
    y=1 and has zero x-derivative on x=0 and x=1. With equal diffusivities on
    both sides it is an exact solution of the coupled interface problem.
    """

    nu: float = 1.0

    def _decay(self, t):
        return np.exp(-2.0 * np.pi**2 * self.nu * np.asarray(t, dtype=float))

    def value(self, x, y, t):
        return self._decay(t) * np.cos(np.pi * x) * np.sin(np.pi * y)

    def grad(self, x, y, t):
        d = self._decay(t) * np.pi
        gx = -d * np.sin(np.pi * x) * np.sin(np.pi * y)
        gy = d * np.cos(np.pi * x) * np.cos(np.pi * y)
        return np.stack(np.broadcast_arrays(gx, gy), axis=-1)

    def hess(self, x, y, t):
        d = self._decay(t) * np.pi**2
        cx, sx = np.cos(np.pi * x), np.sin(np.pi * x)
        cy, sy = np.cos(np.pi * y), np.sin(np.pi * y)
        hxx = -d * cx * sy
        hxy = -d * sx * cy
        hyy = -d * cx * sy
        hxx, hxy, hyy = np.broadcast_arrays(hxx, hxy, hyy)
        row0 = np.stack([hxx, hxy], axis=-1)
        row1 = np.stack([hxy, hyy], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def time_derivative(self, x, y, t):
        return -2.0 * np.pi**2 * self.nu * self.value(x, y, t)

    def laplacian(self, x, y, t):
        return -2.0 * np.pi**2 * self.value(x, y, t)

    def eval_suite(self, x, y, t):
        return {
            "value": self.value(x, y, t),
            "grad": self.grad(x, y, t),
            "hess": self.hess(x, y, t),
            "dt": self.time_derivative(x, y, t),
        }

    def flux(self, spec: InterfaceSpec, x, y, t, nu_f=None):
        """``nu_f * grad(u) . n_f`` at points on the interface."""
        nu_f = self.nu if nu_f is None else nu_f
        n = interface_normal(spec)
        return nu_f * self.grad(x, y, t) @ n


def interface_flux(sol: CosSinMode, spec: InterfaceSpec, s, t, nu_f=None):
    """Fluid-side flux at abscissa ``s`` (the x-coordinate) along the interface."""
    s = np.asarray(s, dtype=float)
    return sol.flux(spec, s, spec.height(s), t, nu_f)
