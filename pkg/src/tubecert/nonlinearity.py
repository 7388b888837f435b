"""Nonlinearities f and their primitives F(t) = int_0^t f."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

__all__ = ["Nonlinearity"]


@dataclass(frozen=True)
class Nonlinearity:
    """A continuous nonlinearity with primitive and derivative.

    Build instances with the classmethods; ``F`` is exact for the power and
    constant kinds and obtained by quadrature otherwise.
    """

    kind: str
    f: Callable
    F: Callable
    df: Callable
    label: str = ""

    def __call__(self, t):
        return self.f(np.asarray(t, dtype=float))

    @classmethod
    def power(cls, q):
        """``f(t) = |t|^(q-2) t``, ``F(t) = |t|^q / q``."""
        q = float(q)
        if q <= 1:
            raise ValueError("power nonlinearity needs q > 1")

        def f(t):
            t = np.asarray(t, dtype=float)
            return np.abs(t) ** (q - 2) * t if q >= 2 else np.sign(t) * np.abs(t) ** (q - 1)

        return cls("power", f, lambda t: np.abs(np.asarray(t, float)) ** q / q,
                   lambda t: (q - 1) * np.abs(np.asarray(t, float)) ** (q - 2), f"|u|^{q:g}-2 u")

    @classmethod
    def constant(cls, c=1.0):
        """Source term ``f = c`` (``F(t) = c t``)."""
        c = float(c)
        return cls("constant", lambda t: np.full(np.shape(t), c), lambda t: c * np.asarray(t, float),
                   lambda t: np.zeros(np.shape(t)), f"{c:g}")

    @classmethod
    def function(cls, f, df=None, label="f"):
        """Arbitrary continuous ``f``; ``F`` by adaptive quadrature."""
        fv = np.vectorize(lambda s: float(f(s)))

        def F(t):
            t = np.asarray(t, dtype=float)
            out = np.empty(t.shape)
            for idx, s in np.ndenumerate(t):
                val, err = integrate.quad(lambda x: float(f(x)), 0.0, float(s),
                                          epsabs=1e-13, epsrel=1e-12, limit=200)
                if not np.isfinite(val):
                    raise ArithmeticError(f"quadrature failed for F({s})")
                out[idx] = val
            return out

        if df is None:
            def df(t, h=1e-6):
                return (fv(np.asarray(t) + h) - fv(np.asarray(t) - h)) / (2 * h)
        return cls("function", fv, F, df, label)

    @classmethod
    def table(cls, t_values, f_values, label="table"):
        """Sampled nonlinearity, shape-preserving (PCHIP) interpolation."""
        t_values = np.asarray(t_values, dtype=float)
        f_values = np.asarray(f_values, dtype=float)
        if not (t_values.min() <= 0.0 <= t_values.max()):
            raise ValueError("table must bracket t = 0")
        interp = PchipInterpolator(t_values, f_values, extrapolate=False)
        prim = interp.antiderivative()
        F0 = float(prim(0.0))
        return cls("table", lambda t: interp(np.asarray(t, float)),
                   lambda t: prim(np.asarray(t, float)) - F0,
                   interp.derivative(), label)
