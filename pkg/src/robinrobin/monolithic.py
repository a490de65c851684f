"""Fully coupled backward-Euler reference solver.

The interface constraint is imposed with a multiplier in the fluid trace
space. Small systems are solved as a symmetric-indefinite saddle problem,
large ones by eliminating the multiplier: with matching interface meshes the
constraint identifies solid and fluid interface dofs, leaving one SPD heat
problem on the whole square. The multiplier is then recovered from the
fluid interface rows.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import DEFAULT_TOL, SolverError, as_csr, cg_solve, dense_solve
from .splitting import Forms, PhysicsParams, SplitState, StepFailure

DENSE_LIMIT = 2000


@dataclass
class SaddleSystem:
    """Block system over (w_free, u_free, l) and its right-hand-side builder."""

    matrix: sp.csr_matrix
    forms: Forms
    params: PhysicsParams

    @property
    def sizes(self):
        return (self.forms.solid.free_dofs.size, self.forms.fluid.free_dofs.size,
                self.forms.fluid.interface_dofs.size)

    def rhs(self, state):
        fs, ff = self.forms.solid.free_dofs, self.forms.fluid.free_dofs
        dt = self.params.dt
        return np.concatenate([
            (self.forms.M_s @ state.w)[fs] / dt,
            (self.forms.M_f @ state.u)[ff] / dt,
            np.zeros(self.sizes[2]),
        ])

    def split(self, x):
        ns, nf, _ = self.sizes
        w = np.zeros(self.forms.solid.dim)
        u = np.zeros(self.forms.fluid.dim)
        w[self.forms.solid.free_dofs] = x[:ns]
        u[self.forms.fluid.free_dofs] = x[ns:ns + nf]
        return w, u, x[ns + nf:].copy()


def _heat_operators(forms, params):
    dt = params.dt
    A_s = as_csr(forms.M_s / dt + params.nu_s * forms.K_s)
    A_f = as_csr(forms.M_f / dt + params.nu_f * forms.K_f)
    return A_s, A_f


def saddle_system(forms: Forms, params: PhysicsParams) -> SaddleSystem:
    key = ("saddle", params.nu_f, params.nu_s, params.dt)
    if key not in forms._cache:
        A_s, A_f = _heat_operators(forms, params)
        fs, ff = forms.solid.free_dofs, forms.fluid.free_dofs
        Ls = forms.L_s[fs]
        Lf = forms.L_f[ff]
        A = sp.bmat([
            [A_s[fs][:, fs], None, Ls],
            [None, A_f[ff][:, ff], -Lf],
            [Ls.T, -Lf.T, None],
        ])
        forms._cache[key] = SaddleSystem(as_csr(A), forms, params)
    return forms._cache[key]


@dataclass
class _Condensed:
    A: sp.csr_matrix
    free: np.ndarray
    P_f: sp.csr_matrix
    P_s: sp.csr_matrix
    A_f: sp.csr_matrix
    A_s: sp.csr_matrix
    B_sigma_lu: object
    dim: int


def _condensed(forms: Forms, params: PhysicsParams) -> _Condensed:
    key = ("condensed", params.nu_f, params.nu_s, params.dt)
    if key in forms._cache:
        return forms._cache[key]
    A_s, A_f = _heat_operators(forms, params)
    nf, ns = forms.fluid.dim, forms.solid.dim
    # global numbering: fluid dofs first, then solid dofs off the interface
    gmap_s = np.full(ns, -1, dtype=np.int64)
    gmap_s[forms.solid.interface_dofs] = forms.fluid.interface_dofs
    rest = np.flatnonzero(gmap_s < 0)
    gmap_s[rest] = nf + np.arange(rest.size)
    dim = nf + rest.size
    P_f = sp.csr_matrix((np.ones(nf), (np.arange(nf), np.arange(nf))), shape=(nf, dim))
    P_s = sp.csr_matrix((np.ones(ns), (np.arange(ns), gmap_s)), shape=(ns, dim))
    A = as_csr(P_f.T @ A_f @ P_f + P_s.T @ A_s @ P_s)
    dirichlet = np.concatenate([forms.fluid.dirichlet_dofs, gmap_s[forms.solid.dirichlet_dofs]])
    mask = np.ones(dim, dtype=bool)
    mask[dirichlet] = False
    free = np.flatnonzero(mask)
    out = _Condensed(as_csr(A[free][:, free]), free, P_f, P_s, A_f, A_s,
                     sp.linalg.splu(forms.B_sigma.tocsc()), dim)
    forms._cache[key] = out
    return out


def monolithic_step(state, forms, params, method="auto", tol=DEFAULT_TOL):
    """One coupled backward-Euler step; returns ``(w, u, l)``.

    ``method`` is ``"dense"`` (LDL^T on the saddle system), ``"cg"`` (CG on
    the condensed SPD system) or ``"auto"`` (dense up to 2000 unknowns).
    """
    if forms.fluid.interface_dofs.size == 0:
        raise SolverError("empty interface; saddle system is singular")
    if method == "auto":
        size = (forms.solid.free_dofs.size + forms.fluid.free_dofs.size
                + forms.fluid.interface_dofs.size)
        method = "dense" if size <= DENSE_LIMIT else "cg"
    if method == "dense":
        S = saddle_system(forms, params)
        x = dense_solve(S.matrix, S.rhs(state))
        return S.split(x)
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")

    c = _condensed(forms, params)
    dt = params.dt
    rhs = c.P_f.T @ (forms.M_f @ state.u) / dt + c.P_s.T @ (forms.M_s @ state.w) / dt
    x = np.zeros(c.dim)
    x0 = (c.P_f.T @ state.u)[c.free]
    x[c.free], _ = cg_solve(c.A, rhs[c.free], tol=tol, x0=x0)
    u = c.P_f @ x
    w = c.P_s @ x
    # fluid interface rows: A_f u - M_f u^n / dt = B_sigma l
    resid = c.A_f @ u - (forms.M_f @ state.u) / dt
    lam = c.B_sigma_lu.solve(resid[forms.fluid.interface_dofs])
    return w, u, lam


def run_monolithic(forms, params, state, method="auto", tol=DEFAULT_TOL, history=3,
                   on_step=None):
    """Run ``params.N`` coupled steps; keeps the last ``history`` states."""
    states = deque([state], maxlen=history)
    for n in range(state.n, params.N):
        try:
            w, u, lam = monolithic_step(states[-1], forms, params, method, tol)
        except SolverError as exc:
            raise StepFailure(n, exc) from exc
        new = SplitState(n + 1, w, u, lam)
        if on_step is not None:
            on_step(states[-1], new)
        states.append(new)
    return list(states)
