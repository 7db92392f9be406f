"""Command-line front end: tables, profiles, maps and invariant reports.

Every run is described by a :class:`RunConfig`. Outputs are CSV or JSON,
carry the full configuration and the library version, and contain no
timestamps, so identical configurations give byte-identical files.

Exit codes: 0 success, 1 invariant failure, 2 convergence failure,
3 usage error.
"""

import argparse
import configparser
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from . import __version__
from . import asymptotic as asy
from . import exact as ex
from .fields import AxialField
from .geometry import make_config, superfocus_region, to_bispherical, to_cartesian

__all__ = ["RunConfig", "Result", "main", "run", "COMMANDS"]

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONVERGENCE = 2
EXIT_USAGE = 3

TABLE2_THETA = (0.0, 0.15, 0.30, 0.45, 0.60, 0.75, 0.90, 1.00)
TABLE2_EPS = (1.0, 0.5, 0.05, 0.005, 0.0005, 5e-5)
TABLE1_R2 = (1.0, 0.7, 0.3, 0.1)
RATE_EPS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
PROGRESS_EPS = 1e-6
DEFAULT_EPS = {"compare": TABLE2_EPS, "rate-study": RATE_EPS, "field-map": (1e-3,)}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run."""

    command: str
    r1: float = 3.0
    r2: tuple = (2.0,)
    eps: tuple = ()
    field: tuple = (1.0,)
    tol: float = 1e-10
    terms_cap: int = ex.TERMS_CAP
    format: str = "csv"
    out: str = None
    grid: tuple = (41, 41)
    theta_list: tuple = TABLE2_THETA
    k_max: int = 6
    digits: int = 6
    extent: float = None
    verbose: bool = False

    @property
    def axial_field(self):
        return AxialField(self.field)

    def provenance(self):
        d = asdict(self)
        d.pop("out")
        d.pop("verbose")
        return d


@dataclass
class Result:
    """Tabular output plus an optional summary block."""

    columns: list
    rows: list = dc_field(default_factory=list)
    summary: dict = dc_field(default_factory=dict)
    failed: bool = False


def _progress(cfg, msg, eps=None):
    if cfg.verbose or (eps is not None and eps <= PROGRESS_EPS):
        print(msg, file=sys.stderr, flush=True)


def _single_r2(cfg):
    if len(cfg.r2) != 1:
        raise UsageError(f"{cfg.command} takes a single --r2 value")
    return cfg.r2[0]


def _uniform_E0(cfg):
    b = cfg.field
    if any(v != 0.0 for v in b[1:]):
        raise UsageError(f"{cfg.command} needs a uniform field (--field E0)")
    return b[0] if b else 0.0


def _thetas(cfg):
    th = np.asarray(cfg.theta_list, dtype=float)
    if np.any(th < 0.0) or np.any(th > 1.0):
        raise UsageError("--theta-list values are in units of pi and must lie in [0, 1]")
    return th


# ---------------------------------------------------------------------------
# commands


def cmd_q_table(cfg):
    """``Q_1 .. Q_kmax`` for ``r1`` and each ``r2``."""
    if cfg.k_max < 1:
        raise UsageError("--k-max must be at least 1")
    cols = ["r2"] + [f"Q_{k}" for k in range(1, cfg.k_max + 1)]
    res = Result(cols)
    for r2 in cfg.r2:
        res.rows.append([r2] + [asy.q_coefficient(k, cfg.r1, r2) for k in range(1, cfg.k_max + 1)])
    return res


def cmd_c_h(cfg):
    """Exact ``C_H^eps`` per gap next to both forms of the limit ``C_H``."""
    r2 = _single_r2(cfg)
    f = cfg.axial_field
    lim = asy.concentration_factor_limit(f, cfg.r1, r2)
    dbl = asy.c_h_double_series(f, cfg.r1, r2)
    res = Result(["eps", "C_H_eps", "C_H", "C_H_double_series", "scaled_error"])
    for eps in cfg.eps:
        _progress(cfg, f"c-h: eps={eps:g}", eps)
        sc = make_config(cfg.r1, r2, eps)
        ce = ex.concentration_factor_eps(sc, f, tol=cfg.tol, cap=cfg.terms_cap)
        scaled = (ce - lim) / (eps * abs(math.log(eps))) if eps != 1.0 else float("nan")
        res.rows.append([eps, ce, lim, dbl, scaled])
    return res


def cmd_exact_profile(cfg):
    """Exact normal derivatives on ``dB1`` over the theta list."""
    r2 = _single_r2(cfg)
    E0 = _uniform_E0(cfg)
    th = _thetas(cfg)
    res = Result(["eps", "theta_over_pi", "dnu_u_minus_H", "dnu_h"])
    for eps in cfg.eps:
        _progress(cfg, f"exact-profile: eps={eps:g}", eps)
        sc = make_config(cfg.r1, r2, eps)
        us = ex.uniform_solution(sc, E0, tol=cfg.tol, cap=cfg.terms_cap)
        hs = ex.h_series(sc, tol=cfg.tol, cap=cfg.terms_cap)
        du = ex.u_normal_derivative(us, 1, th * math.pi)
        dh = ex.h_normal_derivative(hs, 1, th * math.pi)
        res.rows.extend([eps, t, a, b] for t, a, b in zip(th, du, dh))
    return res


def cmd_blowup_profile(cfg):
    """``q_dB1`` and ``C_H q_dB1`` over the theta list."""
    r2 = _single_r2(cfg)
    th = _thetas(cfg)
    C_H = asy.concentration_factor_limit(cfg.axial_field, cfg.r1, r2)
    res = Result(["eps", "theta_over_pi", "q_B1", "C_H_q_B1"], summary={"C_H": C_H})
    for eps in cfg.eps:
        sc = make_config(cfg.r1, r2, eps)
        q = asy.q_boundary_B1(th * math.pi, sc)
        res.rows.extend([eps, t, v, C_H * v] for t, v in zip(th, q))
    return res


def cmd_compare(cfg):
    """Exact ``d_nu (u - H)`` on ``dB1`` against ``C_H q_dB1``.

    A row whose series fails to converge is kept with ``status`` set to
    ``no-convergence`` and empty values.
    """
    r2 = _single_r2(cfg)
    E0 = _uniform_E0(cfg)
    th = _thetas(cfg)
    C_H = E0 * asy.q_coefficient(1, cfg.r1, r2)
    res = Result(["eps", "theta_over_pi", "exact", "asymptotic", "difference", "status"], summary={"C_H": C_H})
    for eps in cfg.eps:
        _progress(cfg, f"compare: eps={eps:g}", eps)
        sc = make_config(cfg.r1, r2, eps)
        asym = C_H * asy.q_boundary_B1(th * math.pi, sc)
        try:
            us = ex.uniform_solution(sc, E0, tol=cfg.tol, cap=cfg.terms_cap)
            exact = ex.u_normal_derivative(us, 1, th * math.pi)
        except ex.ConvergenceError:
            res.rows.extend([eps, t, None, a, None, "no-convergence"] for t, a in zip(th, asym))
            res.summary["convergence_failures"] = res.summary.get("convergence_failures", 0) + len(th)
            continue
        res.rows.extend([eps, t, e, a, e - a, "ok"] for t, e, a in zip(th, exact, asym))
    return res


def cmd_field_map(cfg):
    """``|grad u|`` over the ``(x1, x3)`` half-plane around the gap."""
    r2 = _single_r2(cfg)
    eps_list = cfg.eps
    if len(eps_list) != 1:
        raise UsageError("field-map takes a single --eps value")
    eps = eps_list[0]
    nx, nz = cfg.grid
    if nx < 2 or nz < 2:
        raise UsageError("--grid needs at least 2 points per axis")
    sc = make_config(cfg.r1, r2, eps)
    f = cfg.axial_field
    uniform = all(v == 0.0 for v in f.b[1:])
    W = cfg.extent if cfg.extent is not None else min(cfg.r1, r2)
    x1 = np.linspace(-W, W, nx)
    x3 = np.linspace(-W, W, nz)
    X1, X3 = np.meshgrid(x1, x3, indexing="ij")
    P = np.stack([X1, np.zeros_like(X1), X3], axis=-1).reshape(-1, 3)
    outside = (np.linalg.norm(P - sc.center1, axis=-1) > sc.r1) & (np.linalg.norm(P - sc.center2, axis=-1) > sc.r2)
    P = P[outside]
    b = to_bispherical(P, sc)
    asym = np.linalg.norm(asy.gradient_asymptotic(P, sc, f), axis=-1)
    if uniform and f.b:
        us = ex.uniform_solution(sc, f.b[0], tol=cfg.tol, cap=cfg.terms_cap)
        exact = np.hypot(*ex.u_gradient_bispherical(us, b.xi, b.theta))
    else:
        exact = [None] * len(P)
    inside = superfocus_region(sc).contains(P) if eps < 1.0 else np.zeros(len(P), dtype=bool)
    res = Result(["x1", "x3", "grad_asymptotic", "grad_exact", "in_omega_star"])
    res.rows.extend([p[0], p[2], g, e, bool(i)] for p, g, e, i in zip(P, asym, exact, inside))
    return res


def _fit_slope(x, y):
    return float(np.polyfit(x, y, 1)[0])


def cmd_rate_study(cfg):
    """``C_H^eps`` convergence and the growth of ``max q_h`` over a gap scan."""
    r2 = _single_r2(cfg)
    eps_list = cfg.eps
    if len(eps_list) < 3:
        raise UsageError("rate-study needs at least three --eps values")
    f = cfg.axial_field
    C_H = asy.concentration_factor_limit(f, cfg.r1, r2)
    res = Result(["eps", "C_H_eps", "C_H", "scaled_error", "max_q_h"])
    nx, nt = cfg.grid
    for eps in eps_list:
        _progress(cfg, f"rate-study: eps={eps:g}", eps)
        sc = make_config(cfg.r1, r2, eps)
        ce = ex.concentration_factor_eps(sc, f, tol=cfg.tol, cap=cfg.terms_cap)
        XI, TH = np.meshgrid(
            np.linspace(-sc.xi1, sc.xi2, max(nx, 2)), np.linspace(0.0, math.pi, max(nt, 2))[1:], indexing="ij"
        )
        qmax = float(np.max(asy.q_h_bispherical(XI, TH, sc)))
        res.rows.append([eps, ce, C_H, (ce - C_H) / (eps * abs(math.log(eps))), qmax])
    e = np.array([r[0] for r in res.rows])
    scaled = np.abs([r[3] for r in res.rows])
    slope = _fit_slope(np.log(1.0 / (e * np.abs(np.log(e)))), np.log([r[4] for r in res.rows]))
    res.summary = {
        "C_H": C_H,
        "q_h_slope": slope,
        "scaled_error_spread": float(np.max(scaled) / np.min(scaled)) if np.min(scaled) > 0 else float("inf"),
    }
    return res


def _check(res, name, value, threshold):
    ok = bool(np.isfinite(value) and value < threshold)
    res.rows.append([name, value, threshold, "pass" if ok else "FAIL"])
    res.failed |= not ok


def cmd_invariants(cfg):
    """Run the invariant suite for one configuration."""
    r2 = _single_r2(cfg)
    eps = cfg.eps
    if len(eps) != 1:
        raise UsageError("invariants takes a single --eps value")
    sc = make_config(cfg.r1, r2, eps[0])
    f = cfg.axial_field
    res = Result(["invariant", "residual", "threshold", "status"])

    rng = np.random.default_rng(0)
    xi = rng.uniform(-sc.xi1, sc.xi2, 200)
    th = rng.uniform(0.05, math.pi, 200)
    ph = rng.uniform(0.0, 2.0 * math.pi, 200)
    b = to_bispherical(to_cartesian((xi, th, ph), sc), sc)
    _check(res, "bispherical_round_trip", float(np.max(np.abs(b.xi - xi)) + np.max(np.abs(b.theta - th))), 1e-10)
    _check(res, "sinh_xi_times_r", max(abs(math.sinh(sc.xi1) * sc.r1 / sc.a - 1), abs(math.sinh(sc.xi2) * sc.r2 / sc.a - 1)), 1e-13)

    hs = ex.h_series(sc, tol=cfg.tol, cap=cfg.terms_cap)
    for j, target in ((1, 1.0), (2, -1.0)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ex.TruncationWarning)
            flux = ex.flux_quadrature(sc, lambda t, j=j: ex.h_normal_derivative(hs, j, t), j).value
        _check(res, f"flux_h_dB{j}", abs(flux - target), 1e-6)

    grid = np.linspace(0.0, math.pi, 33)
    hb = ex.h_eval_bispherical(hs, np.full(grid.shape, -sc.xi1), grid)
    _check(res, "h_constant_on_dB1", float(np.max(np.abs(hb - hs.C1)) / abs(hs.C1)), 1e-6)

    ics = ex.image_charges(sc, tol=1e-13, constants=(hs.C1, hs.C2))
    pts = to_cartesian((xi[:50], th[:50], ph[:50]), sc)
    diff = np.max(np.abs(ex.h_via_images(ics, pts) - ex.h_eval(hs, pts))) / abs(hs.C1)
    _check(res, "series_vs_images", float(diff), 1e-5)

    mu1, mu2 = asy.mu_weights(cfg.r1, r2)
    _check(res, "mu1_plus_mu2", abs(mu1 + mu2 - 1.0), 1e-14)

    if not f.is_zero:
        lim = asy.concentration_factor_limit(f, cfg.r1, r2)
        dbl = asy.c_h_double_series(f, cfg.r1, r2)
        _check(res, "C_H_dual_formulas", abs(lim - dbl) / max(abs(lim), 1e-300), 1e-6)

    if all(v == 0.0 for v in f.b[1:]) and f.b and f.b[0] != 0.0:
        E0 = f.b[0]
        us = ex.uniform_solution(sc, E0, tol=cfg.tol, cap=cfg.terms_cap)
        ub = ex.u_minus_H_bispherical(us, np.full(grid.shape, -sc.xi1), grid)
        x3 = to_cartesian((np.full(grid.shape, -sc.xi1), grid, np.zeros(grid.shape)), sc)[:, 2]
        u = ub + E0 * x3
        _check(res, "u_constant_on_dB1", float(np.ptp(u)) / max(abs(E0) * sc.r1, 1e-300), 1e-8)
        u1, u2 = ex.u_boundary_values(us)
        ce = ex.concentration_factor_eps(sc, f, tol=cfg.tol, constants=(hs.C1, hs.C2))
        _check(res, "decomposition_identity", abs(ce - (u1 - u2) / (hs.C1 - hs.C2)) / abs(ce), 1e-4)
        lhs, rhs, r = ex.potential_difference_identity_check(sc, f, tol=cfg.tol)
        _check(res, "potential_difference_identity", r / max(abs(lhs), 1e-300), 1e-5)
    return res


COMMANDS = {
    "q-table": cmd_q_table,
    "c-h": cmd_c_h,
    "exact-profile": cmd_exact_profile,
    "blowup-profile": cmd_blowup_profile,
    "compare": cmd_compare,
    "field-map": cmd_field_map,
    "rate-study": cmd_rate_study,
    "invariants": cmd_invariants,
}

# ---------------------------------------------------------------------------
# output


def _fmt(v, digits):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.{digits}g}"


def _json_value(v, digits):
    if v is None or isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    v = float(v)
    if not math.isfinite(v):
        return None
    return float(f"{v:.{digits}g}")


def render(cfg, result):
    """Serialise ``result`` to a string in the configured format."""
    meta = {"version": __version__, "config": cfg.provenance()}
    d = cfg.digits
    if cfg.format == "json":
        doc = dict(meta)
        doc["columns"] = result.columns
        doc["rows"] = [[_json_value(v, d) for v in row] for row in result.rows]
        doc["summary"] = {k: _json_value(v, d) for k, v in result.summary.items()}
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# spheregap {__version__}\n")
    buf.write("# config " + json.dumps(meta["config"], sort_keys=True) + "\n")
    for k in sorted(result.summary):
        buf.write(f"# {k} = {_fmt(result.summary[k], d)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([_fmt(v, d) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument and config handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _grid(text):
    try:
        nx, nz = (int(v) for v in str(text).lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--grid must look like NxM, got {text!r}") from exc
    return nx, nz


def build_parser():
    p = _Parser(prog="spheregap", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--r1", type=float)
    p.add_argument("--r2", help="radius of the second sphere; a comma list for q-table")
    p.add_argument("--eps", action="append", help="gap width; repeat or comma-separate for a scan")
    p.add_argument("--field", help="axial Taylor coefficients b1,b2,... of H (default 1, the field x3)")
    p.add_argument("--tol", type=float)
    p.add_argument("--terms-cap", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--grid", help="NxM grid resolution")
    p.add_argument("--theta-list", help="theta values in units of pi, comma separated")
    p.add_argument("--k-max", type=int)
    p.add_argument("--digits", type=int, help="significant digits in the output (default 6)")
    p.add_argument("--extent", type=float, help="half-width of the field-map window")
    p.add_argument("--verbose", action="store_true", help="progress messages on stderr")
    return p


_KEYS = ("r1", "r2", "eps", "field", "tol", "terms_cap", "format", "out", "grid", "theta_list", "k_max", "digits", "extent")


def read_config_file(path):
    """Flatten every section of an INI-style file into one key=value mapping."""
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config file: {exc}") from exc
    out = {}
    for section in cp.sections():
        for k, v in cp.items(section):
            key = k.replace("-", "_")
            if key not in _KEYS:
                raise UsageError(f"unknown config key {k!r} in [{section}]")
            out[key] = v
    return out


def _convert(key, value):
    try:
        if key in ("r1", "tol", "extent"):
            return float(value)
        if key in ("terms_cap", "k_max", "digits"):
            return int(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc
    if key in ("r2", "field", "theta_list"):
        return _float_list(value)
    if key == "eps":
        if isinstance(value, (list, tuple)):
            return tuple(x for v in value for x in _float_list(v))
        return _float_list(value)
    if key == "grid":
        return _grid(value)
    if key == "format":
        if value not in ("csv", "json"):
            raise UsageError("format must be csv or json")
    return value


def make_run_config(argv):
    ns = build_parser().parse_args(argv)
    merged = {}
    if ns.config:
        merged.update(read_config_file(ns.config))
    for key in _KEYS:
        v = getattr(ns, key)
        if v is not None:
            merged[key] = v
    kw = {k: _convert(k, v) for k, v in merged.items()}
    if ns.command == "q-table":
        kw.setdefault("r1", 1.0)
        kw.setdefault("r2", TABLE1_R2)
    kw.setdefault("eps", DEFAULT_EPS.get(ns.command, (0.1,)))
    cfg = RunConfig(command=ns.command, verbose=ns.verbose, **kw)
    if cfg.r1 <= 0 or any(r <= 0 for r in cfg.r2) or any(e <= 0 for e in cfg.eps):
        raise UsageError("radii and gaps must be positive")
    if cfg.tol <= 0 or cfg.terms_cap < 1 or cfg.digits < 1:
        raise UsageError("--tol, --terms-cap and --digits must be positive")
    return cfg


def run(cfg):
    """Execute ``cfg`` and return the :class:`Result`."""
    return COMMANDS[cfg.command](cfg)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = make_run_config(argv)
        result = run(cfg)
    except UsageError as exc:
        print(f"spheregap: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ex.ConvergenceError as exc:
        print(f"spheregap: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        print(f"spheregap: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = render(cfg, result)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if result.failed:
        return EXIT_INVARIANT
    if result.summary.get("convergence_failures"):
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
