"""Command-line front end.

Subcommands ``certify``, ``selftest``, ``sweep``, ``solve``, ``pohozaev`` and
``mesh``. Every option can also come from a JSON config file (``--config``),
whose keys are the long option names with dashes replaced by underscores.
Explicit flags take precedence over the file, which takes precedence over
the built-in defaults.

Exit status: 0 success (or certified), 1 not certified, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import solver
from .certificate import Exponents, InadmissibleExponents, coefficient_value, critical_eps
from .curves import resolve_curve
from .field import boundary_positivity, mu, mu_profile, verify_by_finite_differences
from .nonlinearity import Nonlinearity
from .tube import ChartError, ProjectionError, build_chart, write_mesh

log = logging.getLogger(__name__)

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3

SWEEP_SCHEMA = "sweep-v1"
SWEEP_COLUMNS = ["eps", "mu", "C", "trial", "status", "outcome", "u_inf", "residual",
                 "residual_rel", "iterations", "energy"]

COLLAPSE_LEVEL = 1e-3


class InvalidInput(ValueError):
    pass


@dataclass
class ExperimentConfig:
    curve: str | None = None
    n: int = 2
    p: float = 1.5
    q: float | None = None
    eps: list = field(default_factory=list)
    eps_ladder: str | None = None
    eps0: float = 1.0
    h: float | None = None
    trials: int = 0
    seed: int = 0
    out: str | None = None
    workers: int = 1
    source: float = 1.0
    method: str = "bump"
    rtol: float = 1e-10

    @classmethod
    def from_sources(cls, flags: dict, config_path=None):
        values = {}
        if config_path is not None:
            try:
                with open(config_path) as fh:
                    values = json.load(fh)
            except OSError as exc:
                raise InvalidInput(f"cannot read config file: {exc}") from None
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"config file {config_path} is not valid JSON: {exc}") from None
            if not isinstance(values, dict):
                raise InvalidInput("config file must hold a JSON object")
            known = set(cls.__dataclass_fields__)
            unknown = set(values) - known
            if unknown:
                raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        values.update(flags)
        if "eps" in values and not isinstance(values["eps"], list):
            values["eps"] = [values["eps"]]
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self):
        if self.curve is None:
            raise InvalidInput("no curve given (--curve path-or-name)")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidInput(f"n must be an integer >= 2, got {self.n}")
        if not self.p > 1 or (self.q is not None and not self.q > 1):
            raise InvalidInput("need p > 1 and q > 1")
        if any(e <= 0 for e in self.eps):
            raise InvalidInput("half-widths must be positive")
        if self.h is not None and self.h <= 0:
            raise InvalidInput("mesh size h must be positive")
        if self.trials < 0 or self.workers < 1:
            raise InvalidInput("trials must be >= 0 and workers >= 1")
        if self.method not in ("bump", "inverse"):
            raise InvalidInput("method must be 'bump' or 'inverse'")

    def require_q(self):
        if self.q is None:
            raise InvalidInput("this command needs the exponent --q")
        return float(self.q)

    def exponents(self):
        return Exponents(int(self.n), float(self.p), self.require_q())

    def ladder(self):
        """Half-widths from ``--eps`` and/or ``--eps-ladder lo:hi:count``
        (geometric spacing), in increasing order."""
        vals = [float(e) for e in self.eps]
        if self.eps_ladder:
            try:
                lo, hi, k = self.eps_ladder.split(":")
                lo, hi, k = float(lo), float(hi), int(k)
            except ValueError:
                raise InvalidInput(f"bad ladder {self.eps_ladder!r}; expected lo:hi:count") from None
            if not 0 < lo < hi or k < 2:
                raise InvalidInput("ladder needs 0 < lo < hi and count >= 2")
            vals += list(np.geomspace(lo, hi, k))
        return sorted(set(vals))


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return "" if x is None else str(x)


def _emit_json(obj, dest=None):
    text = json.dumps(obj, indent=2, default=_json_default)
    if dest is not None:
        Path(dest).write_text(text + "\n")
    return text


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(type(o).__name__)


def _outdir(cfg):
    if cfg.out is None:
        return None
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _chart(cfg, eps_needed=()):
    curve = resolve_curve(cfg.curve)
    req = max([float(cfg.eps0)] + [float(e) for e in eps_needed])
    chart = build_chart(curve, req)
    for e in eps_needed:
        if e > chart.eps_bar1:
            raise ChartError(f"half-width eps={e:.17g} exceeds eps_bar1={chart.eps_bar1:.17g} "
                             f"for curve {curve.name!r} (limits: {_limits(chart)})")
    return chart


def _limits(chart):
    return ", ".join(f"{k}={v:.6g}" for k, v in chart.limits.items())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_certify(cfg: ExperimentConfig):
    exps = cfg.exponents()
    chart = _chart(cfg)
    cert = critical_eps(chart, exps, f=Nonlinearity.power(exps.q))
    out = _outdir(cfg)
    text = _emit_json(cert.to_dict(), None if out is None else out / "certificate.json")
    if out is not None:
        cert.write_csv(out / "certificate.csv")
    print(text)
    return EXIT_OK if cert.certified else EXIT_NOT_CERTIFIED


def selftest_checks(chart, eps, seed=0):
    """Field, chart and positivity checks at half-width ``eps``."""
    checks = []

    def add(name, value, tol, ok):
        checks.append({"check": name, "value": float(value), "tolerance": tol, "passed": bool(ok)})

    rng = np.random.default_rng(seed)
    t = rng.uniform(chart.a, chart.b, 1000)
    r = rng.uniform(-0.999, 0.999, 1000) * eps
    x = chart.to_physical(t, r)
    tt, rr, inside = chart.project(x)
    err = float(np.max(np.hypot(tt - t, rr - r))) if np.all(inside) else np.inf
    add("chart_roundtrip", err, 1e-8, err <= 1e-8)

    ts = np.linspace(chart.a, chart.b, 4001)
    jac = min(float(np.min(chart.jacobian_det(ts, eps + 0 * ts))),
              float(np.min(chart.jacobian_det(ts, -eps + 0 * ts))))
    add("jacobian_min", jac, 0.0, jac > 0)

    fd_tol = 1e-9 if chart.kappa_max == 0 else 1e-5
    fd = verify_by_finite_differences(chart, min(eps, 0.999 * chart.eps_bar1), seed=seed)
    add("field_finite_differences", fd.max_discrepancy, fd_tol, fd.max_discrepancy <= fd_tol)

    for dom in ("D", "Omega"):
        pos = boundary_positivity(chart, eps, domain=dom)
        add(f"boundary_positivity_{dom}", pos.min_value, -1e-12, pos.nonnegative)

    prof = mu_profile(chart, np.geomspace(1e-3 * eps, eps, 8))
    mono = bool(np.all(np.diff(prof.mu_values) >= 0))
    add("mu_monotone", float(prof.mu_values[-1]), 0.0, mono)
    if chart.kappa_max == 0:
        add("mu_zero_straight", float(np.max(prof.mu_values)), 0.0, np.max(prof.mu_values) == 0)
    return checks


def cmd_selftest(cfg: ExperimentConfig):
    chart = _chart(cfg, cfg.eps[:1])
    eps = float(cfg.eps[0]) if cfg.eps else 0.5 * chart.eps_bar1
    checks = selftest_checks(chart, eps, cfg.seed)
    report = {"curve": chart.curve.name, "eps_bar1": chart.eps_bar1, "eps": eps,
              "warnings": chart.warnings, "checks": checks,
              "passed": all(c["passed"] for c in checks)}
    out = _outdir(cfg)
    print(_emit_json(report, None if out is None else out / "selftest.json"))
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def _classify(sol):
    if sol.diverged:
        return "diverged"
    if sol.u_inf < COLLAPSE_LEVEL:
        return "collapsed"
    return "nontrivial" if sol.converged else "not-converged"


def trial_start(mesh, p, f, rng):
    """Random positive bump scaled near the mountain-pass level."""
    chart = mesh.chart
    L = chart.b - chart.a
    t0 = rng.uniform(chart.a + 0.2 * L, chart.b - 0.2 * L)
    width = rng.uniform(0.05, 0.3) * L
    phi = solver.bump(mesh, t0, width)
    return solver.mountain_pass_scale(mesh, p, f, phi) * np.exp(rng.uniform(-0.5, 0.5)) * phi


def _trial_rng(seed, k, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k), int(trial)]))


_CHART_CACHE = {}


def _sweep_point(args):
    """One ladder point: mu, C and the solver trials. Runs in a worker."""
    cfg_dict, k, eps, eps_max = args
    cfg = ExperimentConfig(**cfg_dict)
    key = (cfg.curve, eps_max, cfg.eps0)
    if key not in _CHART_CACHE:
        _CHART_CACHE[key] = _chart(cfg, [eps_max])
    chart = _CHART_CACHE[key]
    m = mu(chart, eps).mu
    C = coefficient_value(cfg.n, cfg.p, cfg.q, m)
    base = {"eps": eps, "mu": m, "C": C}
    if cfg.trials == 0:
        return [base]
    rows = []
    f = Nonlinearity.power(cfg.q)
    try:
        mesh = chart.mesh(eps, cfg.h if cfg.h is not None else eps / 4)
    except (ChartError, ValueError) as exc:
        return [dict(base, trial=j, status="error", outcome=f"mesh: {exc}") for j in range(cfg.trials)]
    for j in range(cfg.trials):
        try:
            u0 = trial_start(mesh, cfg.p, f, _trial_rng(cfg.seed, k, j))
            sol = solver.solve_semilinear(mesh, cfg.p, f, u0, rtol=cfg.rtol)
            rows.append(dict(base, trial=j, status=sol.status, outcome=_classify(sol),
                             u_inf=sol.u_inf, residual=sol.residual_norm,
                             residual_rel=sol.residual_rel, iterations=sol.iterations,
                             energy=sol.energy))
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            rows.append(dict(base, trial=j, status="error", outcome=str(exc)))
    return rows


def run_sweep(cfg: ExperimentConfig):
    """Rows of the sweep table in ladder order."""
    cfg.require_q()
    ladder = cfg.ladder()
    if not ladder:
        raise InvalidInput("sweep needs --eps or --eps-ladder")
    _chart(cfg, [ladder[-1]])  # fail early, in the parent, on invalid geometry
    d = asdict(cfg)
    jobs = [(d, k, e, ladder[-1]) for k, e in enumerate(ladder)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    return [row for rows in results for row in rows]


def write_sweep_csv(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in SWEEP_COLUMNS])


def cmd_sweep(cfg: ExperimentConfig):
    rows = run_sweep(cfg)
    out = _outdir(cfg)
    if out is None:
        write_sweep_csv(rows, sys.stdout)
    else:
        with open(out / "sweep.csv", "w", newline="") as fh:
            write_sweep_csv(rows, fh)
        print(out / "sweep.csv")
    return EXIT_OK


def _single_eps(cfg):
    if len(cfg.eps) != 1:
        raise InvalidInput("this command needs exactly one --eps")
    return float(cfg.eps[0])


def _run_solve(cfg):
    eps = _single_eps(cfg)
    chart = _chart(cfg, [eps])
    mesh = chart.mesh(eps, cfg.h if cfg.h is not None else eps / 4)
    if cfg.q is None:
        f = Nonlinearity.constant(cfg.source)
        sol = solver.solve_source(mesh, cfg.p, cfg.source)
    else:
        f = Nonlinearity.power(cfg.q)
        if cfg.method == "inverse":
            sol = solver.ground_state(mesh, cfg.p, f, rtol=cfg.rtol)
        else:
            u0 = trial_start(mesh, cfg.p, f, _trial_rng(cfg.seed, 0, 0))
            sol = solver.solve_semilinear(mesh, cfg.p, f, u0, rtol=cfg.rtol)
    return chart, mesh, f, sol


def _solution_summary(chart, mesh, f, sol):
    return {"curve": chart.curve.name, "eps": mesh.eps, "h": mesh.h, "vertices": mesh.n_vertices,
            "triangles": len(mesh.triangles), "p": sol.p, "f": f.label, "status": sol.status,
            "outcome": _classify(sol) if f.kind != "constant" else sol.status,
            "iterations": sol.iterations, "energy": sol.energy, "u_inf": sol.u_inf,
            "residual": sol.residual_norm, "residual_rel": sol.residual_rel, "delta": sol.delta}


def cmd_solve(cfg: ExperimentConfig):
    chart, mesh, f, sol = _run_solve(cfg)
    summary = _solution_summary(chart, mesh, f, sol)
    out = _outdir(cfg)
    if out is not None:
        solver.write_solution(sol, out / "solution.mesh")
    print(_emit_json(summary, None if out is None else out / "solution.json"))
    return EXIT_OK if sol.converged else EXIT_NUMERICAL


def cmd_pohozaev(cfg: ExperimentConfig):
    chart, mesh, f, sol = _run_solve(cfg)
    rep = solver.pohozaev_residual(sol, chart, cfg.p, f)
    report = {"solution": _solution_summary(chart, mesh, f, sol), "identity": rep.to_dict()}
    if f.kind == "power":
        exps = (int(cfg.n), float(cfg.p), float(cfg.q))
        report["inequality"] = solver.inequality_check(sol, chart, exps, f).to_dict()
    out = _outdir(cfg)
    if out is not None:
        solver.write_solution(sol, out / "solution.mesh")
    print(_emit_json(report, None if out is None else out / "pohozaev.json"))
    return EXIT_OK if sol.converged else EXIT_NUMERICAL


def cmd_mesh(cfg: ExperimentConfig):
    eps = _single_eps(cfg)
    chart = _chart(cfg, [eps])
    mesh = chart.mesh(eps, cfg.h if cfg.h is not None else eps / 4)
    out = _outdir(cfg)
    info = {"curve": chart.curve.name, "eps": eps, "eps_bar1": chart.eps_bar1, "h": mesh.h,
            "vertices": mesh.n_vertices, "triangles": len(mesh.triangles),
            "area": float(mesh.areas.sum())}
    if out is not None:
        write_mesh(mesh, out / "tube.mesh")
    print(_emit_json(info))
    return EXIT_OK


COMMANDS = {"certify": cmd_certify, "selftest": cmd_selftest, "sweep": cmd_sweep,
            "solve": cmd_solve, "pohozaev": cmd_pohozaev, "mesh": cmd_mesh}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--curve", help="curve spec file or shipped curve name")
    common.add_argument("--n", type=int, help="dimension (default 2)")
    common.add_argument("--p", type=float, help="p-Laplacian exponent (default 1.5)")
    common.add_argument("--q", type=float, help="power of the nonlinearity |u|^(q-2) u")
    common.add_argument("--eps", type=float, action="append",
                        help="tube half-width; repeat for a list")
    common.add_argument("--eps-ladder", dest="eps_ladder", help="lo:hi:count, geometric")
    common.add_argument("--eps0", type=float, help="requested chart half-width (default 1)")
    common.add_argument("--h", type=float, help="mesh size (default eps/4)")
    common.add_argument("--trials", type=int, help="solver trials per half-width")
    common.add_argument("--seed", type=int, help="seed for the initial bumps")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes for sweeps")
    common.add_argument("--source", type=float, help="constant source when --q is omitted")
    common.add_argument("--method", choices=["bump", "inverse"],
                        help="nontrivial search: Newton from a bump, or inverse iteration")
    common.add_argument("--rtol", type=float, help="relative residual tolerance")
    common.add_argument("-v", "--verbose", action="store_true", default=False)

    parser = argparse.ArgumentParser(prog="tubecert", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"certify": "critical half-width certificate and (eps, mu, C) table",
             "selftest": "chart, field and positivity checks",
             "sweep": "mu, C and solver trials along a ladder of half-widths",
             "solve": "solve on one tube (source problem unless --q is given)",
             "pohozaev": "solve, then evaluate both sides of the integral identity",
             "mesh": "write a tube mesh"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    verbose = args.pop("verbose", False)
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config_path = args.pop("config", None)
    try:
        cfg = ExperimentConfig.from_sources(args, config_path)
        return COMMANDS[command](cfg)
    except (InadmissibleExponents, ChartError, InvalidInput, FileNotFoundError) as exc:
        print(f"tubecert {command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (solver.ConvergenceError, ProjectionError, ArithmeticError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"tubecert {command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError) as exc:
        print(f"tubecert {command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
