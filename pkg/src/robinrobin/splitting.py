"""Loosely coupled Robin-Robin time stepping.

Each step solves the solid problem with Robin data from the previous fluid
state, then the fluid problem with Robin data from the new solid state, and
finally updates the interface multiplier from the trace jump. Optional
residual terms ``b1, b2, eps1, eps2`` turn the scheme into the generalised
system used for stability studies.

The multiplier lives in the trace of the fluid space and is stored as
coefficients in ``fluid.interface_dofs`` order.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    Space,
    assemble_interface_mass,
    assemble_mass,
    assemble_stiffness,
    build_space,
    domain_load,
    interface_load,
    interface_mass_matrix,
    interpolate,
    l2_project_interface,
)
from .linalg import DEFAULT_TOL, SolverError, as_csr, cg_solve
from .mesh import Mesh, Subdomain

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicsParams:
    nu_f: float = 1.0
    nu_s: float = 1.0
    alpha: float = 4.0
    T: float = 0.25
    N: int = 1

    def __post_init__(self):
        for name in ("nu_f", "nu_s", "alpha", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.N


@dataclass(frozen=True)
class ResidualInjection:
    """Right-hand sides of the generalised scheme, callables ``f(x, y, t)``.

    ``b1`` acts in the solid, ``b2`` in the fluid, ``eps1`` and ``eps2`` on the
    interface (``eps2`` is also evaluated in the fluid for stability norms).
    """

    b1: object = None
    b2: object = None
    eps1: object = None
    eps2: object = None

    @property
    def is_zero(self) -> bool:
        return all(f is None for f in (self.b1, self.b2, self.eps1, self.eps2))


@dataclass
class SplitState:
    n: int
    w: np.ndarray
    u: np.ndarray
    lam: np.ndarray

    def copy(self) -> "SplitState":
        return SplitState(self.n, self.w.copy(), self.u.copy(), self.lam.copy())


@dataclass
class Forms:
    """All matrices for one mesh and degree.

    ``B_f``/``B_s`` are full-size interface masses, ``C_sf`` couples solid rows
    to fluid columns, ``B_sigma`` is the interface mass in interface order,
    and ``L_f``/``L_s`` map multiplier coefficients to fluid/solid loads.
    """

    mesh: Mesh
    fluid: Space
    solid: Space
    M_f: sp.csr_matrix
    K_f: sp.csr_matrix
    M_s: sp.csr_matrix
    K_s: sp.csr_matrix
    B_f: sp.csr_matrix
    B_s: sp.csr_matrix
    C_sf: sp.csr_matrix
    B_sigma: sp.csr_matrix
    L_f: sp.csr_matrix
    L_s: sp.csr_matrix
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def C_fs(self):
        return self.C_sf.T.tocsr()

    def trace_f(self, u):
        return np.asarray(u)[self.fluid.interface_dofs]

    def trace_s(self, w):
        return np.asarray(w)[self.solid.interface_dofs]

    def sigma_inner(self, a, b):
        return float(a @ (self.B_sigma @ b))


def build_forms(mesh: Mesh, degree: int = 1) -> Forms:
    fluid = build_space(mesh, Subdomain.FLUID, degree)
    solid = build_space(mesh, Subdomain.SOLID, degree)
    B_f = assemble_interface_mass(fluid, fluid)
    C_sf = assemble_interface_mass(solid, fluid)
    return Forms(
        mesh=mesh,
        fluid=fluid,
        solid=solid,
        M_f=assemble_mass(fluid),
        K_f=assemble_stiffness(fluid),
        M_s=assemble_mass(solid),
        K_s=assemble_stiffness(solid),
        B_f=B_f,
        B_s=assemble_interface_mass(solid, solid),
        C_sf=C_sf,
        B_sigma=interface_mass_matrix(fluid),
        L_f=as_csr(B_f[:, fluid.interface_dofs]),
        L_s=as_csr(C_sf[:, fluid.interface_dofs]),
    )


@dataclass
class StepRecord:
    """Everything the energy identity needs for one completed step."""

    prev: SplitState
    new: SplitState
    load_s: np.ndarray      # (b1, z)_s + <eps1, z>
    load_f: np.ndarray      # (b2, v)_f
    eps2: np.ndarray        # projected eps2, interface order
    iterations: tuple = ()


def _restricted(A, free):
    return as_csr(A[free][:, free])


def _operators(forms: Forms, params: PhysicsParams):
    key = (params.nu_f, params.nu_s, params.alpha, params.dt)
    ops = forms._cache.get(key)
    if ops is None:
        dt = params.dt
        A_s = forms.M_s / dt + params.nu_s * forms.K_s + params.alpha * forms.B_s
        A_f = forms.M_f / dt + params.nu_f * forms.K_f + params.alpha * forms.B_f
        ops = {
            "A_s": _restricted(A_s, forms.solid.free_dofs),
            "A_f": _restricted(A_f, forms.fluid.free_dofs),
            "A_s_full": as_csr(A_s),
            "A_f_full": as_csr(A_f),
            "C_fs": as_csr(forms.C_sf.T),
        }
        forms._cache[key] = ops
    return ops


def init_state(forms: Forms, u0, w0, flux0=None) -> SplitState:
    """Initial state from nodal interpolants.

    With ``flux0`` (a callable ``(x, y)`` giving the fluid flux on the
    interface) the multiplier is its L2 projection onto the trace space,
    otherwise it starts at zero.
    """
    u = interpolate(forms.fluid, u0)
    w = interpolate(forms.solid, w0)
    u[forms.fluid.dirichlet_dofs] = 0.0
    w[forms.solid.dirichlet_dofs] = 0.0
    if flux0 is None:
        lam = np.zeros(forms.fluid.interface_dofs.size)
    else:
        lam = l2_project_interface(forms.fluid, flux0)
    return SplitState(0, w, u, lam)


def zero_state(forms: Forms) -> SplitState:
    return SplitState(0, np.zeros(forms.solid.dim), np.zeros(forms.fluid.dim),
                      np.zeros(forms.fluid.interface_dofs.size))


def injection_loads(forms: Forms, injection, t):
    """Return (solid load, fluid load, projected eps2) at time ``t``."""
    load_s = np.zeros(forms.solid.dim)
    load_f = np.zeros(forms.fluid.dim)
    eps2 = np.zeros(forms.fluid.interface_dofs.size)
    if injection is None:
        return load_s, load_f, eps2
    if injection.b1 is not None:
        load_s += domain_load(forms.solid, injection.b1, t)
    if injection.eps1 is not None:
        load_s += interface_load(forms.solid, injection.eps1, t)
    if injection.b2 is not None:
        load_f += domain_load(forms.fluid, injection.b2, t)
    if injection.eps2 is not None:
        eps2 = l2_project_interface(forms.fluid, injection.eps2, t)
    return load_s, load_f, eps2


def _solve(A, rhs, free, x0, tol):
    x = np.zeros(rhs.shape[0])
    sol, report = cg_solve(A, rhs[free], tol=tol, x0=x0[free])
    x[free] = sol
    return x, report


def solid_step(state, forms, params, injection=None, tol=DEFAULT_TOL, loads=None):
    """Solve the solid Robin problem driven by ``u^n, lambda^n``.

    Returns the new solid coefficients and the CG report.
    """
    ops = _operators(forms, params)
    if loads is None:
        loads = injection_loads(forms, injection, (state.n + 1) * params.dt)
    load_s = loads[0]
    rhs = (forms.M_s @ state.w) / params.dt + params.alpha * (forms.C_sf @ state.u) \
        - forms.L_s @ state.lam + load_s
    return _solve(ops["A_s"], rhs, forms.solid.free_dofs, state.w, tol)


def fluid_step(state, w_new, forms, params, injection=None, tol=DEFAULT_TOL, loads=None):
    """New fluid coefficients from the Robin problem driven by ``w^{n+1}, lambda^n``."""
    ops = _operators(forms, params)
    if loads is None:
        loads = injection_loads(forms, injection, (state.n + 1) * params.dt)
    _, load_f, eps2 = loads
    rhs = (forms.M_f @ state.u) / params.dt + params.alpha * (ops["C_fs"] @ w_new) \
        + forms.L_f @ (state.lam + eps2) + load_f
    return _solve(ops["A_f"], rhs, forms.fluid.free_dofs, state.u, tol)


def lambda_update(state, w_new, u_new, forms, params, eps2=None):
    """``lambda^{n+1} = lambda^n - alpha (u^{n+1} - w^{n+1}) + P eps2`` on the interface."""
    jump = forms.trace_f(u_new) - forms.trace_s(w_new)
    lam = state.lam - params.alpha * jump
    if eps2 is not None:
        lam = lam + eps2
    return lam


def step(state, forms, params, injection=None, tol=DEFAULT_TOL):
    """Advance one step; returns a :class:`StepRecord`."""
    loads = injection_loads(forms, injection, (state.n + 1) * params.dt)
    w_new, rep_s = solid_step(state, forms, params, tol=tol, loads=loads)
    u_new, rep_f = fluid_step(state, w_new, forms, params, tol=tol, loads=loads)
    lam_new = lambda_update(state, w_new, u_new, forms, params, loads[2])
    new = SplitState(state.n + 1, w_new, u_new, lam_new)
    return StepRecord(state, new, loads[0], loads[1], loads[2],
                      (rep_s.iterations, rep_f.iterations))


class StepFailure(RuntimeError):
    def __init__(self, step_index, cause):
        super().__init__(f"step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause


def run(forms, params, state, injection=None, tol=DEFAULT_TOL, history=3, on_step=None):
    """Run ``params.N`` steps from ``state``.

    Keeps the last ``history`` states (``None`` keeps all). ``on_step`` is
    called with every :class:`StepRecord`.
    """
    states = deque([state], maxlen=history)
    for n in range(state.n, params.N):
        try:
            rec = step(states[-1], forms, params, injection, tol)
        except SolverError as exc:
            raise StepFailure(n, exc) from exc
        if on_step is not None:
            on_step(rec)
        states.append(rec.new)
    return list(states)
