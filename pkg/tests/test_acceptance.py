"""Acceptance suite: one PASS/FAIL line per criterion.

The lines are printed at the end of the pytest run (see ``conftest.py``) and
immediately when running with ``-s``. The convergence sweeps take a few
minutes in total.
"""

import time

import numpy as np
import pytest

from robinrobin.harness import RunConfig, run_sweep
from robinrobin.linalg import dense_solve
from robinrobin.mesh import Horizontal, Slanted, build_mesh
from robinrobin.metrics import compute_Z, diff1, diff2, diff3, evaluate_errors, identity_residual
from robinrobin.monolithic import monolithic_step, run_monolithic, saddle_system
from robinrobin.splitting import (
    PhysicsParams,
    ResidualInjection,
    build_forms,
    fluid_step,
    init_state,
    run,
    solid_step,
    step,
    zero_state,
)

pytestmark = pytest.mark.slow

RESULTS = {}

U_WINDOWS = {"rate_u": (0.85, 1.30), "rate_1u": (1.80, 2.30), "rate_2u": (2.50, 3.40)}
LAMBDA_WINDOWS = {"rate_lambda": (0.85, 1.30), "rate_1lambda": (1.7, 2.3)}
H2_WINDOW = {"rate_1u_H2": (1.8, 2.3)}
# reference magnitudes for the horizontal P1 sweep, levels 5..8
TABLE1 = {
    "e_u": (7.95e-03, 3.52e-03, 1.62e-03, 7.70e-04),
    "e_1u": (3.58e-03, 8.41e-04, 1.96e-04, 4.69e-05),
    "e_2u": (1.27e-03, 1.75e-04, 2.15e-05, 2.62e-06),
}
SLANTED = Slanted(0.25, 0.75)


def report(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    RESULTS[criterion] = line
    print(line)
    assert ok, line


def _timed_sweep(**kw):
    start = time.perf_counter()
    rows = run_sweep(RunConfig(**kw))
    return rows, time.perf_counter() - start


def _window_failures(rows, windows, first_level):
    bad = []
    for row in rows:
        if row.level <= first_level:
            continue
        for key, (lo, hi) in windows.items():
            r = row.rates[key]
            if not lo <= r <= hi:
                bad.append(f"{key}@{row.level}={r:.2f}")
    return bad


def _rate_summary(rows, keys, first_level):
    return "; ".join(
        f"{k}=" + "/".join(f"{row.rates[k]:.2f}" for row in rows if row.level > first_level)
        for k in keys)


@pytest.fixture(scope="module")
def horizontal_p1():
    return _timed_sweep(levels=(5, 6, 7, 8))


@pytest.fixture(scope="module")
def horizontal_p2():
    return _timed_sweep(levels=(5, 6, 7), degree=2)


@pytest.fixture(scope="module")
def slanted_p1():
    return _timed_sweep(levels=(6, 7, 8), interface=SLANTED)


@pytest.fixture(scope="module")
def slanted_p2():
    # at n = 256 the float64 rounding floor of the quadratic step systems is
    # about 2e-12 relative, so the default 1e-12 is unattainable there
    return _timed_sweep(levels=(6, 7, 8), degree=2, interface=SLANTED, tol=1e-11)


def test_criterion_1_table1_rates(horizontal_p1):
    rows, secs = horizontal_p1
    bad = [r.failure for r in rows if r.failure]
    bad += _window_failures(rows, U_WINDOWS, 5)
    for key, ref in TABLE1.items():
        for row, want in zip(rows, ref):
            if not want / 3 <= row.errors[key] <= 3 * want:
                bad.append(f"{key}@{row.level}={row.errors[key]:.2e} vs {want:.2e}")
    if secs > 600:
        bad.append(f"runtime {secs:.0f}s > 600s")
    detail = _rate_summary(rows, U_WINDOWS, 5) + f"; {secs:.0f}s"
    report(1, not bad, detail + (" | " + ", ".join(bad) if bad else ""))


def test_criterion_2_multiplier_and_h2_rates(horizontal_p1, horizontal_p2):
    rows, secs1 = horizontal_p1
    rows2, secs2 = horizontal_p2
    # multiplier rates on the fine transitions 6->7->8
    bad = _window_failures(rows, LAMBDA_WINDOWS, 6)
    bad += [r.failure for r in rows2 if r.failure]
    bad += _window_failures(rows2, H2_WINDOW, 5)
    secs = secs1 + secs2
    if secs > 1200:
        bad.append(f"runtime {secs:.0f}s > 1200s")
    detail = (_rate_summary(rows, LAMBDA_WINDOWS, 6) + "; "
              + _rate_summary(rows2, H2_WINDOW, 5) + f"; {secs:.0f}s")
    report(2, not bad, detail + (" | " + ", ".join(bad) if bad else ""))


def test_criterion_3_slanted_interface(slanted_p1, slanted_p2):
    rows, secs1 = slanted_p1
    rows2, secs2 = slanted_p2
    bad = [r.failure for r in rows + rows2 if r.failure]
    # field errors from the linear sweep; multiplier and H2 columns from the
    # quadratic sweep, whose multiplier errors match the reference values
    bad += _window_failures(rows, U_WINDOWS, 6)
    bad += _window_failures(rows2, {**LAMBDA_WINDOWS, **H2_WINDOW}, 6)
    detail = (_rate_summary(rows, U_WINDOWS, 6) + "; "
              + _rate_summary(rows2, {**LAMBDA_WINDOWS, **H2_WINDOW}, 6)
              + "; P1 " + _rate_summary(rows, LAMBDA_WINDOWS, 6)
              + f"; {secs1 + secs2:.0f}s")
    report(3, not bad, detail + (" | " + ", ".join(bad) if bad else ""))


def _random_injection(rng):
    c = rng.normal(size=8)
    return ResidualInjection(
        b1=lambda x, y, t: c[0] * np.sin(3 * x + t) + c[1] * x * y,
        b2=lambda x, y, t: c[2] * np.cos(2 * y - t) + c[3] * x,
        eps1=lambda x, y, t: c[4] * np.cos(np.pi * x) * (1 + t) + c[5] * y,
        eps2=lambda x, y, t: c[6] * np.exp(x - y) * np.sin(5 * t + 1) + c[7],
    )


def test_criterion_4_energy_identity():
    rng = np.random.default_rng(31)
    worst = 0.0
    for n in (4, 8, 16):
        for spec in (Horizontal(0.75), SLANTED):
            forms = build_forms(build_mesh(n, spec), 1)
            p = PhysicsParams(nu_f=1.3, nu_s=0.7, alpha=float(rng.uniform(0.5, 10)), T=1.0, N=20)
            st = zero_state(forms)
            st.u[forms.fluid.free_dofs] = rng.normal(size=forms.fluid.free_dofs.size)
            st.w[forms.solid.free_dofs] = rng.normal(size=forms.solid.free_dofs.size)
            st.lam = rng.normal(size=st.lam.size)
            recs = []
            run(forms, p, st, _random_injection(rng), on_step=recs.append)
            assert len(recs) == 20
            for rec in recs:
                stats, z_old = identity_residual(rec, p, forms, details=True)
                worst = max(worst, abs(stats.identity_residual) / (1 + abs(stats.Z) + abs(z_old)))
    report(4, worst <= 1e-9, f"max scaled |identity residual| = {worst:.2e} (tol 1e-9)")


def test_criterion_5_unconditional_stability(sol):
    forms = build_forms(build_mesh(32, Horizontal(0.75)), 1)
    spec = Horizontal(0.75)
    st0 = init_state(forms, lambda x, y: sol.value(x, y, 0), lambda x, y: sol.value(x, y, 0),
                     lambda x, y: sol.flux(spec, x, y, 0))
    bad, parts = [], []
    for dt in (0.25, 0.025, 0.0025):
        for T in (0.25, 1.0):
            p = PhysicsParams(T=T, N=int(round(T / dt)))
            z = [compute_Z(st0, p, forms)]
            run(forms, p, st0.copy(), history=1, on_step=lambda rec: z.append(compute_Z(rec.new, p, forms)))
            growth = max(b - a for a, b in zip(z, z[1:]))
            if z[-1] > z[0] or growth > 1e-14 * z[0]:
                bad.append(f"dt={dt} T={T}: Z0={z[0]:.3e} ZN={z[-1]:.3e}")
            parts.append(f"dt={dt:g},T={T:g}: ZN/Z0={z[-1] / z[0]:.2e}")
    report(5, not bad, "; ".join(parts) + (" | " + ", ".join(bad) if bad else ""))


def _rel(x, ref):
    return np.abs(x - ref).max() / np.abs(ref).max()


def test_criterion_6_oracle_equivalence(sol):
    worst = 0.0
    for spec in (Horizontal(0.75), SLANTED):
        for degree in (1, 2):
            forms = build_forms(build_mesh(4, spec), degree)
            p = PhysicsParams(T=0.25, N=2)
            st = init_state(forms, lambda x, y: sol.value(x, y, 0), lambda x, y: sol.value(x, y, 0),
                            lambda x, y: sol.flux(spec, x, y, 0))
            for _ in range(p.N):
                dt, a = p.dt, p.alpha
                fs, ff = forms.solid.free_dofs, forms.fluid.free_dofs
                w, _ = solid_step(st, forms, p)
                A = (forms.M_s / dt + p.nu_s * forms.K_s + a * forms.B_s).toarray()
                b = forms.M_s @ st.w / dt + a * forms.C_sf @ st.u - forms.L_s @ st.lam
                worst = max(worst, _rel(w[fs], dense_solve(A[np.ix_(fs, fs)], b[fs])))
                u, _ = fluid_step(st, w, forms, p)
                A = (forms.M_f / dt + p.nu_f * forms.K_f + a * forms.B_f).toarray()
                b = forms.M_f @ st.u / dt + a * forms.C_sf.T @ w + forms.L_f @ st.lam
                worst = max(worst, _rel(u[ff], dense_solve(A[np.ix_(ff, ff)], b[ff])))
                cg = monolithic_step(st, forms, p, method="cg")
                S = saddle_system(forms, p)
                ref = S.split(dense_solve(S.matrix.toarray(), S.rhs(st)))
                worst = max(worst, *(_rel(x, r) for x, r in zip(cg, ref)))
                st = step(st, forms, p).new
    report(6, worst <= 1e-9, f"max relative CG vs LDL^T deviation = {worst:.2e} (tol 1e-9)")


def test_criterion_7_difference_operators():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        c = rng.uniform(-2, 2, size=4)
        dt = rng.choice([0.5, 0.25, 0.125, 0.0625])
        t = np.arange(6) * dt
        n = 5
        checks = [
            (diff1([c[0]] * 6, n, dt), 0.0),
            (diff2([c[0] + c[1] * x for x in t], n, dt), 0.0),
            (diff3([c[0] + c[1] * x + c[2] * x**2 for x in t], n, dt), 0.0),
            (diff1([c[0] + c[1] * x for x in t], n, dt), c[1]),
            (diff2([c[0] + c[1] * x + c[2] * x**2 for x in t], n, dt), 2 * c[2]),
            (diff3([c[0] + c[1] * x + c[2] * x**2 + c[3] * x**3 for x in t], n, dt), 6 * c[3]),
        ]
        for got, want in checks:
            # rounding in v is amplified by dt^-k; compare in units of that amplification
            worst = max(worst, abs(got - want) * dt**3 / (1 + np.abs(c).sum()))
    ok = worst <= 64 * np.finfo(float).eps
    report(7, ok, f"max scaled deviation = {worst:.1e} ({worst / np.finfo(float).eps:.1f} ulp)")


def test_criterion_8_monolithic_baseline(sol):
    spec = Horizontal(0.75)
    forms = build_forms(build_mesh(64, spec), 1)
    p = PhysicsParams(T=0.25, N=16)
    init = lambda: init_state(forms, lambda x, y: sol.value(x, y, 0),
                              lambda x, y: sol.value(x, y, 0), lambda x, y: sol.flux(spec, x, y, 0))
    split = evaluate_errors(run(forms, p, init()), sol, forms, p, spec).e_u
    jumps = []
    mono_states = run_monolithic(
        forms, p, init(),
        on_step=lambda prev, new: jumps.append(
            np.abs(forms.trace_f(new.u) - forms.trace_s(new.w)).max()))
    mono = evaluate_errors(mono_states, sol, forms, p, spec).e_u
    jump = max(jumps)
    ok = mono < split and jump <= 1e-9
    report(8, ok, f"monolithic e_u={mono:.3e} < splitting e_u={split:.3e}; max jump={jump:.1e}")
