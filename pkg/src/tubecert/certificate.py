"""Nonexistence certificates for thin tubes.

For admissible exponents ``1 < p < n``, ``q > n p / (n - p)`` the coefficient

    C(eps) = (1 - n/p + n/q) + (1 + 1/p + 1/q) mu(eps)

is negative at ``eps = 0``. Every solution on a tube of half-width eps with
``C(eps) < 0`` is trivial, provided the nonlinearity satisfies
``t f(t) >= q F(t) >= 0``. The certificate reports the critical half-width
``eps_bar`` below which ``C < 0`` holds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .field import MuProfile, mu, mu_profile
from .nonlinearity import Nonlinearity
from .tube import TubeChart

__all__ = [
    "InadmissibleExponents",
    "Exponents",
    "ConditionReport",
    "Certificate",
    "check_condition_f",
    "coefficient",
    "coefficient_value",
    "critical_eps",
]

GEOMETRY_LIMITED = ("geometry-limited: C(eps_bar1) < 0, so eps_bar equals the chart "
                    "half-width eps_bar1")
CONDITIONAL = "verdict is conditional on t f(t) >= q F(t) >= 0 for the nonlinearity"


class InadmissibleExponents(ValueError):
    pass


@dataclass(frozen=True)
class Exponents:
    n: int
    p: float
    q: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InadmissibleExponents(f"dimension n={self.n} must be an integer >= 2")
        if not 1 < self.p < self.n:
            raise InadmissibleExponents(f"need 1 < p < n, got p={self.p}, n={self.n}")
        if not self.q > self.critical:
            raise InadmissibleExponents(
                f"need q > n p / (n - p) = {self.critical:.17g}, got q={self.q}")

    @property
    def critical(self):
        return self.n * self.p / (self.n - self.p)

    @property
    def base(self):
        return 1.0 - self.n / self.p + self.n / self.q

    @property
    def slope(self):
        return 1.0 + 1.0 / self.p + 1.0 / self.q


def coefficient_value(n, p, q, mu_value):
    """Raw coefficient, no admissibility check."""
    return (1.0 - n / p + n / q) + (1.0 + 1.0 / p + 1.0 / q) * mu_value


def coefficient(exponents: Exponents, mu_value):
    if np.any(np.asarray(mu_value) < 0):
        raise ValueError("mu must be nonnegative")
    return exponents.base + exponents.slope * np.asarray(mu_value, dtype=float)


@dataclass
class ConditionReport:
    passed: bool
    margin: float
    margin_t: float
    min_F: float
    min_F_t: float
    samples: int

    def to_dict(self):
        return dict(self.__dict__)


def check_condition_f(f: Nonlinearity, q, t_samples, tol=1e-9):
    """Check ``t f(t) - q F(t) >= 0`` and ``F(t) >= 0`` on samples.

    Both quantities are divided by ``max(1, |t f(t)|)`` to absorb rounding
    in large values; ``margin`` and ``min_F`` are the smallest scaled values
    and pass when ``>= -tol``. Equality ``t f = q F`` (pure powers) gives a
    margin at rounding level.
    """
    t = np.asarray(t_samples, dtype=float).ravel()
    if not (np.any(t < 0) and np.any(t > 0)):
        raise ValueError("t samples must cover both signs")
    tf = t * f.f(t)
    F = f.F(t)
    if not np.all(np.isfinite(F)):
        raise ArithmeticError("primitive F is not finite on the samples")
    scale = np.maximum(1.0, np.abs(tf))
    gap = (tf - q * F) / scale
    Fs = F / scale
    k, j = int(np.argmin(gap)), int(np.argmin(Fs))
    passed = bool(gap[k] >= -tol and Fs[j] >= -tol)
    return ConditionReport(passed, float(gap[k]), float(t[k]), float(Fs[j]), float(t[j]), len(t))


@dataclass
class Certificate:
    exponents: Exponents
    curve_id: str
    eps_bar1: float
    base: float
    slope: float
    mu_profile: MuProfile
    eps_bar: float
    verdict: str
    warnings: list = field(default_factory=list)
    geometry_limited: bool = False
    mu_at_eps_bar: float = 0.0
    condition_f: ConditionReport | None = None

    @property
    def certified(self):
        return self.verdict == "certified"

    def C(self, mu_value):
        return self.base + self.slope * np.asarray(mu_value)

    def statement(self):
        n = self.exponents.n
        dom = "tube D_eps" if n == 2 else "cylinder D_eps x {|y| < s}, any s > 0,"
        return (f"for every eps in (0, {self.eps_bar:.17g}) the Dirichlet problem on the {dom} "
                f"has only the trivial solution")

    def table(self):
        prof = self.mu_profile
        return [(float(e), float(m), float(self.C(m))) for e, m in zip(prof.eps_values, prof.mu_values)]

    def to_dict(self):
        e = self.exponents
        return {
            "curve": self.curve_id,
            "exponents": {"n": e.n, "p": e.p, "q": e.q, "critical_q": e.critical},
            "eps_bar1": self.eps_bar1,
            "base": self.base,
            "slope": self.slope,
            "eps_bar": self.eps_bar,
            "mu_at_eps_bar": self.mu_at_eps_bar,
            "C_at_eps_bar": float(self.C(self.mu_at_eps_bar)),
            "geometry_limited": self.geometry_limited,
            "verdict": self.verdict,
            "statement": self.statement(),
            "condition_f": None if self.condition_f is None else self.condition_f.to_dict(),
            "warnings": list(self.warnings),
            "mu_ladder": [
                {"eps": eps, "mu": m, "C": c, "argmax_t": float(pt[0]), "argmax_r": float(pt[1])}
                for (eps, m, c), pt in zip(self.table(), self.mu_profile.argmax_points)
            ],
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def write_csv(self, dest):
        """Columns ``eps,mu,C`` with 17 significant digits."""
        close = not hasattr(dest, "write")
        fh = open(dest, "w", newline="") if close else dest
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "mu", "C"])
            for row in self.table():
                w.writerow(["%.17g" % v for v in row])
        finally:
            if close:
                fh.close()


def critical_eps(chart: TubeChart, exponents: Exponents, f: Nonlinearity | None = None,
                 ladder=32, rtol=1e-6, grid=(512, 64), ladder_span=1e-3, f_samples=None):
    """Critical half-width ``eps_bar`` with ``C(mu(eps)) < 0`` on ``(0, eps_bar)``.

    ``mu`` is tabulated on a log-spaced ladder of ``ladder`` half-widths from
    ``ladder_span * eps_bar1`` to ``eps_bar1``. The first sign change of C on
    the ladder brackets the root, which is then located by bisection on
    freshly computed ``mu`` values to relative tolerance ``rtol``; the lower
    end of the final bracket is returned so that the certified interval stays
    on the negative side. If ``f`` is given, the condition on f is checked on
    ``f_samples`` (default ``linspace(-10, 10, 2001)``) and folded into the
    verdict.
    """
    e1 = chart.eps_bar1
    eps_ladder = np.geomspace(ladder_span * e1, e1, ladder)
    prof = mu_profile(chart, eps_ladder, grid)
    C = coefficient(exponents, prof.mu_values)
    warnings = list(chart.warnings) + [CONDITIONAL]

    if C[-1] < 0:
        eps_bar, mu_bar, limited = e1, float(prof.mu_values[-1]), True
        warnings.append(GEOMETRY_LIMITED)
    else:
        k = int(np.argmax(C >= 0))
        lo = 0.0 if k == 0 else float(eps_ladder[k - 1])
        hi = float(eps_ladder[k])
        mu_lo = 0.0 if k == 0 else float(prof.mu_values[k - 1])
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            m = mu(chart, mid, grid).mu
            if exponents.base + exponents.slope * m < 0:
                lo, mu_lo = mid, m
            else:
                hi = mid
        eps_bar, mu_bar, limited = lo, mu_lo, False

    cond = None
    if f is not None:
        ts = np.linspace(-10, 10, 2001) if f_samples is None else f_samples
        cond = check_condition_f(f, exponents.q, ts)
    verdict = "certified" if eps_bar > 0 and (cond is None or cond.passed) else "not-certified"
    return Certificate(exponents=exponents, curve_id=chart.curve.name, eps_bar1=e1,
                       base=exponents.base, slope=exponents.slope, mu_profile=prof,
                       eps_bar=float(eps_bar), verdict=verdict, warnings=warnings,
                       geometry_limited=limited, mu_at_eps_bar=mu_bar, condition_f=cond)
