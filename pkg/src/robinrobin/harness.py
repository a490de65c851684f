"""Convergence sweeps over h = dt = 2^-k and table output."""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exact import CosSinMode
from .fem import interpolate
from .linalg import DEFAULT_TOL, SolverError
from .mesh import Horizontal, InterfaceSpec, build_mesh, format_interface, parse_interface
from .metrics import ERROR_KEYS, compute_Xi, compute_Z, evaluate_errors, identity_residual, \
    observed_rate
from .monolithic import run_monolithic
from .splitting import PhysicsParams, ResidualInjection, SplitState, StepFailure, \
    build_forms, init_state, run, zero_state

log = logging.getLogger(__name__)

SCHEMES = ("splitting", "monolithic", "interpolant")
LAMBDA0_MODES = ("auto", "flux", "zero")
IDENTITY_TOL = 1e-9

CSV_COLUMNS = ("level", "dt", "h", "e_u", "rate_u", "e_1u", "rate_1u", "e_2u", "rate_2u",
               "e_lambda", "rate_lambda", "e_1lambda", "rate_1lambda", "e_1u_H2", "rate_1u_H2")
RATE_KEYS = dict(zip(ERROR_KEYS, ("rate_u", "rate_1u", "rate_2u", "rate_lambda",
                                  "rate_1lambda", "rate_1u_H2")))


class ConfigError(ValueError):
    pass


# Named residual-injection presets. Each entry maps b1, b2, eps1, eps2 to smooth
# space-time functions.
def _preset_smooth():
    return ResidualInjection(
        b1=lambda x, y, t: np.sin(np.pi * x) * (1.0 - y) * np.cos(t),
        b2=lambda x, y, t: np.cos(np.pi * x) * y * (1.0 + t),
        eps1=lambda x, y, t: 0.5 * np.cos(np.pi * x) * np.exp(-t),
        eps2=lambda x, y, t: 0.25 * (1.0 + x) * np.sin(np.pi * y) * np.cos(2.0 * t),
    )


def _preset_bulk():
    full = _preset_smooth()
    return ResidualInjection(b1=full.b1, b2=full.b2)


def _preset_interface():
    full = _preset_smooth()
    return ResidualInjection(eps1=full.eps1, eps2=full.eps2)


INJECTION_PRESETS = {
    "smooth": _preset_smooth,
    "bulk": _preset_bulk,
    "interface": _preset_interface,
}


@dataclass(frozen=True)
class RunConfig:
    nu_f: float = 1.0
    nu_s: float = 1.0
    alpha: float = 4.0
    T: float = 0.25
    interface: InterfaceSpec = Horizontal(0.75)
    degree: int = 1
    levels: tuple = (2, 3, 4, 5, 6, 7, 8)
    scheme: str = "splitting"
    lambda0_mode: str = "auto"
    tol: float = DEFAULT_TOL
    csv_path: str | None = None
    markdown: bool = True
    functionals_path: str | None = None
    check_identity: bool = False
    inject: str | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.lambda0_mode not in LAMBDA0_MODES:
            raise ConfigError(f"unknown lambda0 mode {self.lambda0_mode!r}")
        if self.degree not in (1, 2):
            raise ConfigError(f"degree must be 1 or 2, got {self.degree}")
        if not self.levels:
            raise ConfigError("no levels given")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError(f"levels must be strictly increasing: {self.levels}")
        if min(self.levels) < 1:
            raise ConfigError("levels must be >= 1")
        for name in ("nu_f", "nu_s", "alpha", "T", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for k in self.levels:
            steps = self.T * 2**k
            if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
                raise ConfigError(f"T/dt is not a positive integer at level {k}")
        if self.inject is not None and self.inject not in INJECTION_PRESETS:
            raise ConfigError(f"unknown injection preset {self.inject!r}; "
                              f"choose from {sorted(INJECTION_PRESETS)}")
        if self.inject is not None and self.scheme != "splitting":
            raise ConfigError("residual injection needs the splitting scheme")

    def physics(self, level: int) -> PhysicsParams:
        return PhysicsParams(self.nu_f, self.nu_s, self.alpha, self.T, int(round(self.T * 2**level)))

    def injection(self):
        return None if self.inject is None else INJECTION_PRESETS[self.inject]()

    def solution(self):
        if self.nu_f != self.nu_s:
            raise ConfigError("the manufactured solution needs nu_f == nu_s")
        return CosSinMode(self.nu_f)


def _parse_levels(text):
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad levels {text!r}") from exc


def _parse_bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


# section -> key -> (field, parser)
_CONFIG_KEYS = {
    "physics": {"nu_f": ("nu_f", float), "nu_s": ("nu_s", float), "alpha": ("alpha", float),
                "t": ("T", float)},
    "interface": {"spec": ("interface", parse_interface)},
    "discretization": {"degree": ("degree", int), "levels": ("levels", _parse_levels),
                       "scheme": ("scheme", str.strip), "lambda0": ("lambda0_mode", str.strip),
                       "tol": ("tol", float)},
    "outputs": {"csv": ("csv_path", str.strip), "markdown": ("markdown", _parse_bool),
                "functionals": ("functionals_path", str.strip),
                "check_identity": ("check_identity", _parse_bool)},
    "injection": {"preset": ("inject", lambda s: None if s.strip().lower() == "none" else s.strip())},
}


def parse_config_text(text, base: RunConfig | None = None) -> RunConfig:
    """Parse a ``key = value`` config with optional sections."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in parser.sections():
        keys = _CONFIG_KEYS.get(section.lower())
        if keys is None:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            name, conv = keys[key]
            try:
                values[name] = conv(raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    base = base or RunConfig()
    return replace(base, **values)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass
class ConvergenceRow:
    level: int
    dt: float
    h: float
    errors: dict
    rates: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    failure: str | None = None

    def error(self, key):
        return self.errors.get(key, math.nan)


def _initial_state(config, forms, sol):
    spec = config.interface
    if config.inject is not None:
        return zero_state(forms)
    mode = config.lambda0_mode
    if mode == "auto":
        mode = "flux"
    flux0 = (lambda x, y: sol.flux(spec, x, y, 0.0, config.nu_f)) if mode == "flux" else None
    return init_state(forms, lambda x, y: sol.value(x, y, 0.0),
                      lambda x, y: sol.value(x, y, 0.0), flux0)


def _interpolant_run(config, forms, params, sol):
    """Exact nodal interpolants at the last three steps, for harness checks."""
    from .fem import l2_project_interface
    states = []
    for n in range(max(params.N - 2, 0), params.N + 1):
        t = n * params.dt
        u = interpolate(forms.fluid, sol.value, t)
        w = interpolate(forms.solid, sol.value, t)
        lam = l2_project_interface(forms.fluid, lambda x, y: sol.flux(config.interface, x, y, t,
                                                                       config.nu_f))
        states.append(SplitState(n, w, u, lam))
    return states


def run_level(config: RunConfig, level: int) -> ConvergenceRow:
    """Run one refinement level ``h = dt = 2^-level`` and evaluate its errors."""
    n = 2**level
    params = config.physics(level)
    mesh = build_mesh(n, config.interface)
    forms = build_forms(mesh, config.degree)
    sol = config.solution()
    injection = config.injection()
    state = _initial_state(config, forms, sol)
    diagnostics = {}
    functionals = []
    want_functionals = config.check_identity or config.functionals_path or injection is not None

    def on_step(rec):
        stats, z_old = identity_residual(rec, params, forms, details=True)
        bound = IDENTITY_TOL * (1.0 + abs(stats.Z) + abs(z_old))
        functionals.append((rec.new.n, stats.Z, stats.S, stats.identity_residual))
        if config.check_identity and abs(stats.identity_residual) > bound:
            raise SolverError(f"energy identity violated at step {rec.new.n}: "
                              f"residual {stats.identity_residual:.3e} > {bound:.3e}")

    if config.scheme == "splitting":
        states = run(forms, params, state, injection, config.tol,
                     on_step=on_step if want_functionals else None)
    elif config.scheme == "monolithic":
        states = run_monolithic(forms, params, state, tol=config.tol)
    else:
        states = _interpolant_run(config, forms, params, sol)

    if functionals:
        resid = max(abs(f[3]) for f in functionals)
        diagnostics["max_identity_residual"] = resid
        diagnostics["Z_N"] = functionals[-1][1]
        diagnostics["S_sum"] = sum(f[2] for f in functionals)
        diagnostics["Z_0"] = compute_Z(state, params, forms)
        log.info("level %d: max |identity residual| = %.3e", level, resid)
    if injection is not None:
        diagnostics["Xi"] = compute_Xi(forms, params, injection)
        errors = {k: math.nan for k in ERROR_KEYS}
    else:
        errors = evaluate_errors(states, sol, forms, params, config.interface).as_dict()
    row = ConvergenceRow(level, params.dt, mesh.h, errors, diagnostics=diagnostics)
    row.diagnostics["functionals"] = functionals
    return row


def _attach_rates(rows):
    prev = None
    for row in rows:
        row.rates = {}
        for key in ERROR_KEYS:
            if prev is None or prev.failure or row.failure:
                row.rates[RATE_KEYS[key]] = math.nan
            else:
                row.rates[RATE_KEYS[key]] = observed_rate(prev.error(key), row.error(key),
                                                          prev.h, row.h)
        prev = row
    return rows


def _run_level_safe(config, level):
    try:
        return run_level(config, level)
    except (SolverError, StepFailure, FloatingPointError) as exc:
        log.error("level %d failed: %s", level, exc)
        return ConvergenceRow(level, config.T / round(config.T * 2**level), 2.0**-level,
                              {k: math.nan for k in ERROR_KEYS}, failure=str(exc))


def run_sweep(config: RunConfig, jobs: int = 1) -> list[ConvergenceRow]:
    """Run every level (independently) and attach observed rates.

    A failing level yields a row with ``failure`` set; other levels still run.
    """
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_level_safe, [config] * len(config.levels), config.levels))
    else:
        rows = [_run_level_safe(config, k) for k in config.levels]
    return _attach_rates(rows)


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.5e}"


def csv_text(rows) -> str:
    if not rows:
        raise ValueError("no rows to write")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        out = [str(row.level), _fmt(row.dt), _fmt(row.h)]
        for key in ERROR_KEYS:
            out += [_fmt(row.error(key)), _fmt(row.rates.get(RATE_KEYS[key], math.nan))]
        writer.writerow(out)
    return buf.getvalue()


def emit_csv(rows, path) -> None:
    text = csv_text(rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _md_num(x, rate=False):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{x:.2f}" if rate else f"{x:.2e}"


def emit_markdown(rows) -> str:
    """Two markdown tables: field errors, then multiplier and H2 errors."""
    if not rows:
        raise ValueError("no rows to format")
    groups = (("e_u", "e_1u", "e_2u"), ("e_lambda", "e_1lambda", "e_1u_H2"))
    parts = []
    for keys in groups:
        header = "| dt | " + " | ".join(f"{k} | rate" for k in keys) + " |"
        sep = "|" + "---|" * (1 + 2 * len(keys))
        lines = [header, sep]
        for row in rows:
            cells = [f"(1/2)^{row.level}"]
            for k in keys:
                cells += [_md_num(row.error(k)), _md_num(row.rates.get(RATE_KEYS[k]), rate=True)]
            if row.failure:
                cells = [f"(1/2)^{row.level}", f"FAILED: {row.failure}"] + [""] * (2 * len(keys) - 1)
            lines.append("| " + " | ".join(cells) + " |")
        parts.append("\n".join(lines))
    return "\n\n".join(parts) + "\n"


def emit_functionals(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("level", "step", "Z", "S", "identity_residual"))
        for row in rows:
            for step, Z, S, res in row.diagnostics.get("functionals", []):
                writer.writerow((row.level, step, _fmt(Z), _fmt(S), _fmt(res)))


def describe(config: RunConfig) -> str:
    return (f"scheme={config.scheme} interface={format_interface(config.interface)} "
            f"degree={config.degree} alpha={config.alpha:g} T={config.T:g} "
            f"nu_f={config.nu_f:g} nu_s={config.nu_s:g} levels={list(config.levels)}")
