"""Difference operators, stability functionals and error quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import error_norms, interpolate, interface_error_norm
from .splitting import Forms, PhysicsParams, ResidualInjection, StepRecord


def _history(v, n, order):
    if n - order < 0 or n >= len(v):
        raise IndexError(f"difference of order {order} at index {n} needs entries "
                         f"{n - order}..{n}, have {len(v)}")
    return [np.asarray(v[n - k], dtype=float) for k in range(order + 1)]


def diff1(v, n, dt):
    """``(v^n - v^{n-1}) / dt``."""
    a, b = _history(v, n, 1)
    return (a - b) / dt


def diff2(v, n, dt):
    """``(v^n - 2 v^{n-1} + v^{n-2}) / dt^2``."""
    a, b, c = _history(v, n, 2)
    return (a - 2 * b + c) / dt**2


def diff3(v, n, dt):
    """``(v^n - 3 v^{n-1} + 3 v^{n-2} - v^{n-3}) / dt^3``."""
    a, b, c, d = _history(v, n, 3)
    return (a - 3 * b + 3 * c - d) / dt**3


def _sq(A, x):
    return float(x @ (A @ x))


def compute_Z(state, params: PhysicsParams, forms: Forms) -> float:
    uS = forms.trace_f(state.u)
    return (0.5 * _sq(forms.M_f, state.u) + 0.5 * _sq(forms.M_s, state.w)
            + 0.5 * params.dt * params.alpha * _sq(forms.B_sigma, uS)
            + 0.5 * params.dt / params.alpha * _sq(forms.B_sigma, state.lam))


def compute_S(prev, new, params: PhysicsParams, forms: Forms) -> float:
    dt, a = params.dt, params.alpha
    du = new.u - prev.u
    dw = new.w - prev.w
    jump = forms.trace_f(du) + (new.lam - prev.lam) / a
    return (dt * (params.nu_f * _sq(forms.K_f, new.u) + params.nu_s * _sq(forms.K_s, new.w))
            + 0.5 * (_sq(forms.M_s, dw) + _sq(forms.M_f, du))
            + 0.5 * a * dt * _sq(forms.B_sigma, jump))


def forcing_F(rec: StepRecord, forms: Forms) -> float:
    """Forcing term of the one-step energy balance (without the eps2-lambda term)."""
    new, prev = rec.new, rec.prev
    wS = forms.trace_s(new.w)
    duS = forms.trace_f(new.u - prev.u)
    return (float(rec.load_s @ new.w) + float(rec.load_f @ new.u)
            + forms.sigma_inner(rec.eps2, wS) + forms.sigma_inner(duS, rec.eps2))


@dataclass(frozen=True)
class StepFunctionals:
    Z: float
    S: float
    identity_residual: float


def identity_residual(rec: StepRecord, params: PhysicsParams, forms: Forms,
                      details=False):
    """``Z^{n+1} + S^{n+1} - Z^n - dt F^{n+1} - (dt/alpha) <eps2, lambda^{n+1}>``."""
    Z_new = compute_Z(rec.new, params, forms)
    Z_old = compute_Z(rec.prev, params, forms)
    S = compute_S(rec.prev, rec.new, params, forms)
    F = forcing_F(rec, forms)
    extra = params.dt / params.alpha * forms.sigma_inner(rec.eps2, rec.new.lam)
    res = Z_new + S - Z_old - params.dt * F - extra
    if details:
        return StepFunctionals(Z_new, S, res), Z_old
    return res


def compute_Xi(forms: Forms, params: PhysicsParams, injection: ResidualInjection, m=0):
    """Stability bound functional of the injected data over steps ``m..N-1``.

    Data are represented by nodal interpolants: ``b1`` in the solid space,
    ``b2`` and ``eps2`` in the fluid space, ``eps1`` through its fluid-space
    interpolant's trace.
    """
    dt, a = params.dt, params.alpha
    nu_f, nu_s = params.nu_f, params.nu_s
    N = params.N
    fl, so = forms.fluid, forms.solid

    def rep(space, f, t):
        return np.zeros(space.dim) if f is None else interpolate(space, f, t)

    total = 0.0
    s2_prev = None
    for n in range(m, N):
        t = (n + 1) * dt
        b1 = rep(so, injection.b1, t)
        b2 = rep(fl, injection.b2, t)
        s1 = rep(fl, injection.eps1, t)
        s2 = rep(fl, injection.eps2, t)
        total += dt * (_sq(forms.M_s, b1) / nu_s + (1 / nu_f + 1 / a) * _sq(forms.M_f, b2))
        total += dt * (nu_f / a**2 * _sq(forms.K_f, s2) + _sq(forms.M_f, s2) / a)
        total += dt * (_sq(forms.B_sigma, forms.trace_f(s1 + s2)) / nu_s
                       + _sq(forms.B_sigma, forms.trace_f(s2)) / nu_f)
        if n >= m + 1:
            ds2 = (s2 - s2_prev) / dt
            total += dt / (nu_f * a**2) * _sq(forms.M_f, ds2)
        s2_prev = s2
        if n == N - 1:
            total += _sq(forms.M_f, s2) / a**2
    return total


ERROR_KEYS = ("e_u", "e_1u", "e_2u", "e_lambda", "e_1lambda", "e_1u_H2")


@dataclass(frozen=True)
class ErrorReport:
    e_u: float
    e_1u: float
    e_2u: float
    e_lambda: float
    e_1lambda: float
    e_1u_H2: float = math.nan

    def as_dict(self):
        return {k: getattr(self, k) for k in ERROR_KEYS}


def evaluate_errors(states, sol, forms: Forms, params: PhysicsParams, spec, h2=None):
    """Final-time errors from the last three states of a run.

    ``sol`` is a manufactured solution (``value``, ``grad``, ``hess``,
    ``flux``). The H2 column is computed when ``h2`` is true, by default
    whenever the spaces are quadratic.
    """
    if len(states) < 2:
        raise ValueError("need at least two states")
    h2 = forms.fluid.degree >= 2 if h2 is None else h2
    N = states[-1].n
    dt = params.dt
    t = [(N - k) * dt for k in range(3)]
    fl = forms.fluid
    uN, uN1 = states[-1].u, states[-2].u

    def combo(fun, coeffs):
        def f(x, y):
            return sum(c * fun(x, y, tk) for c, tk in zip(coeffs, t))
        return f

    e_u = error_norms(fl, uN, combo(sol.value, [1]))["L2"]
    d1 = error_norms(fl, uN - uN1, combo(sol.value, [1, -1]),
                     combo(sol.grad, [1, -1]), combo(sol.hess, [1, -1]), h2=h2)
    if len(states) >= 3 and N >= 2:
        uN2 = states[-3].u
        e_2u = error_norms(fl, uN - 2 * uN1 + uN2, combo(sol.value, [1, -2, 1]))["L2"]
    else:
        e_2u = math.nan

    def flux(coeffs):
        def f(x, y):
            return sum(c * sol.flux(spec, x, y, tk, params.nu_f) for c, tk in zip(coeffs, t))
        return f

    e_lam = interface_error_norm(fl, states[-1].lam, flux([1]))
    e_1lam = interface_error_norm(fl, states[-1].lam - states[-2].lam, flux([1, -1]))
    return ErrorReport(e_u=e_u, e_1u=d1["L2"], e_2u=e_2u, e_lambda=e_lam,
                       e_1lambda=e_1lam, e_1u_H2=d1["H2broken"] if h2 else math.nan)


def observed_rate(e_coarse, e_fine, h_coarse, h_fine):
    """``log(e_coarse / e_fine) / log(h_coarse / h_fine)``; NaN when undefined."""
    if not (e_coarse > 0 and e_fine > 0) or any(map(math.isnan, (e_coarse, e_fine))):
        return math.nan
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)
