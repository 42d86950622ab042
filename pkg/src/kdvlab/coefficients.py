"""Coefficients of the linear equation

    u_t = a u_xxx + b u_xx + c u_x + d u + e

together with the modified diffusion ``delta = b/|a|``, its spatial mean and
the resulting well-posedness classification.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import expr as _expr
from .spectral import PeriodicGrid

__all__ = [
    "CoefficientExpr",
    "TabulatedCoefficient",
    "ReflectedCoefficient",
    "CoefficientSet",
    "WellPosedness",
    "WellPosednessVerdict",
    "AssumptionReport",
    "DegenerateDispersionError",
    "parse_expression",
    "as_coefficient",
    "modified_diffusion",
    "mean_modified_diffusion",
    "rounded_mean",
    "classify",
    "check_assumptions",
    "default_time_lattice",
]

NAMES = ("a", "b", "c", "d", "e")
EPS = np.finfo(float).eps
# Means smaller than this many ulps of max|delta| are rounding noise.
ROUNDING_ULPS = 64


class DegenerateDispersionError(ValueError):
    """The dispersion coefficient vanishes (or changes sign) on the grid."""

    def __init__(self, message: str, x: float | None = None, t: float | None = None):
        self.x = x
        self.t = t
        super().__init__(message)


class CoefficientExpr:
    """A parsed expression in ``x`` and ``t``."""

    def __init__(self, source: str):
        self.source = source
        self.tree = _expr.parse(source)
        self._vars = _expr.variables(self.tree)

    @property
    def depends_on_x(self) -> bool:
        return "x" in self._vars

    @property
    def depends_on_t(self) -> bool:
        return "t" in self._vars

    def __call__(self, x=0.0, t=0.0):
        return _expr.evaluate(self.tree, x, t)

    def sample(self, grid: PeriodicGrid, t: float = 0.0) -> np.ndarray:
        v = np.asarray(self(grid.x, float(t)), dtype=float)
        return np.broadcast_to(v, (grid.N,)).copy()

    def scalar(self, t: float = 0.0) -> float:
        if self.depends_on_x:
            raise ValueError(f"{self.source!r} depends on x")
        return float(self(0.0, float(t)))

    def canonical(self) -> str:
        return _expr.to_source(self.tree)

    def __eq__(self, other):
        return isinstance(other, CoefficientExpr) and other.tree == self.tree

    def __hash__(self):
        return hash(self.tree)

    def __repr__(self):
        return f"CoefficientExpr({self.source!r})"


def parse_expression(source: str) -> CoefficientExpr:
    """Parse ``source``; raises ExpressionSyntaxError with offset and expected tokens."""
    return CoefficientExpr(source)


class TabulatedCoefficient:
    """Samples on a fixed grid, optionally at several times (linear in t between them)."""

    def __init__(self, values, times=None):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
            times = [0.0]
        if times is None:
            raise ValueError("time-dependent tables need their sample times")
        times = np.asarray(times, dtype=float)
        if v.ndim != 2 or v.shape[0] != times.size:
            raise ValueError("one row of samples is needed per time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("table times must increase strictly")
        if not np.all(np.isfinite(v)):
            raise ValueError("tabulated coefficient has non-finite samples")
        self.values = v
        self.times = times

    @property
    def depends_on_t(self) -> bool:
        return self.times.size > 1

    @property
    def depends_on_x(self) -> bool:
        return bool(np.ptp(self.values, axis=1).max() > 0)

    def sample(self, grid: PeriodicGrid, t: float = 0.0) -> np.ndarray:
        if self.values.shape[1] != grid.N:
            raise ValueError(f"table has {self.values.shape[1]} samples, grid has {grid.N}")
        if self.times.size == 1:
            return self.values[0].copy()
        j = int(np.clip(np.searchsorted(self.times, t) - 1, 0, self.times.size - 2))
        t0, t1 = self.times[j], self.times[j + 1]
        w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        return (1 - w) * self.values[j] + w * self.values[j + 1]

    def scalar(self, t: float = 0.0) -> float:
        if self.depends_on_x:
            raise ValueError("tabulated coefficient varies in x")
        j = int(np.clip(np.searchsorted(self.times, t) - 1, 0, self.times.size - 1))
        return float(self.values[j, 0])


class ReflectedCoefficient:
    """``sign * base(M - x, t0 - t)``; the spatial reflection is exact index reversal."""

    def __init__(self, base, sign: float = 1.0, t0: float | None = None):
        self.base = base
        self.sign = float(sign)
        self.t0 = t0

    depends_on_x = property(lambda self: self.base.depends_on_x)
    depends_on_t = property(lambda self: self.base.depends_on_t)

    def sample(self, grid: PeriodicGrid, t: float = 0.0) -> np.ndarray:
        rev = (-np.arange(grid.N)) % grid.N
        return self.sign * self.base.sample(grid, self._time(t))[rev]

    def scalar(self, t: float = 0.0) -> float:
        return self.sign * self.base.scalar(self._time(t))

    def _time(self, t):
        return t if self.t0 is None else self.t0 - t


def as_coefficient(value):
    """Coerce strings, numbers, arrays and coefficient objects to a coefficient."""
    if isinstance(value, (CoefficientExpr, TabulatedCoefficient, ReflectedCoefficient)):
        return value
    if all(hasattr(value, k) for k in ("sample", "depends_on_x", "depends_on_t")):
        return value
    if isinstance(value, str):
        return CoefficientExpr(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return CoefficientExpr(repr(float(value)))
    if isinstance(value, np.ndarray):
        return TabulatedCoefficient(value)
    raise TypeError(f"cannot interpret {value!r} as a coefficient")


@dataclass(frozen=True)
class CoefficientSet:
    """The five coefficients of the linear equation on the time window [0, T]."""

    a: object = "1"
    b: object = "0"
    c: object = "0"
    d: object = "0"
    e: object = "0"
    T: float = 1.0

    def __post_init__(self):
        for name in NAMES:
            object.__setattr__(self, name, as_coefficient(getattr(self, name)))
        if not self.T > 0:
            raise ValueError("time window T must be positive")

    def items(self):
        return [(n, getattr(self, n)) for n in NAMES]

    @property
    def depends_on_t(self) -> bool:
        return any(getattr(self, n).depends_on_t for n in NAMES)

    def is_constant_in_x(self, name: str) -> bool:
        return not getattr(self, name).depends_on_x

    def sample(self, grid: PeriodicGrid, t: float = 0.0) -> dict[str, np.ndarray]:
        out = {}
        for name in NAMES:
            v = getattr(self, name).sample(grid, t)
            if not np.all(np.isfinite(v)):
                idx = int(np.flatnonzero(~np.isfinite(v))[0])
                raise ValueError(f"coefficient {name} is not finite at x={grid.x[idx]!r}, t={t!r}")
            out[name] = v
        return out

    def reflected(self, t0: float | None = None) -> "CoefficientSet":
        """Coefficients of ``w(x,s) = u(M-x, t0-s)``: (a, -b, c, -d, -e) at (M-x, t0-s).

        Without ``t0`` only space is reflected, which suffices for
        time-independent coefficients.
        """
        signs = {"a": 1.0, "b": -1.0, "c": 1.0, "d": -1.0, "e": -1.0}
        T = self.T if t0 is None else t0
        return CoefficientSet(**{n: ReflectedCoefficient(getattr(self, n), signs[n], t0) for n in NAMES}, T=T)

    def sources(self) -> dict[str, str]:
        out = {}
        for name in NAMES:
            c = getattr(self, name)
            out[name] = c.source if isinstance(c, CoefficientExpr) else f"<{type(c).__name__}>"
        return out


class WellPosedness(str, enum.Enum):
    SMOOTHING = "SMOOTHING"
    REVERSIBLE = "REVERSIBLE"
    WELLPOSED = "WELLPOSED"
    ILLPOSED = "ILLPOSED"
    DEGENERATE = "DEGENERATE"


@dataclass
class WellPosednessVerdict:
    klass: WellPosedness
    a0: float
    t_samples: np.ndarray
    delta_bar: np.ndarray
    tolerance: float
    delta0: float | None = None
    degenerate_at: tuple[float, float] | None = None

    @property
    def max_abs_delta_bar(self) -> float:
        return float(np.max(np.abs(self.delta_bar))) if self.delta_bar.size else float("nan")

    def to_dict(self) -> dict:
        return {
            "class": self.klass.value,
            "a0": self.a0,
            "t_samples": [float(t) for t in self.t_samples],
            "delta_bar": [float(v) for v in self.delta_bar],
            "delta0": self.delta0,
            "tolerance": self.tolerance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_dispersion(a: np.ndarray, grid: PeriodicGrid, t: float, threshold: float) -> None:
    small = np.abs(a) <= threshold
    if small.any():
        j = int(np.flatnonzero(small)[0])
        raise DegenerateDispersionError(
            f"|a| = {abs(a[j])!r} <= {threshold!r} at x = {grid.x[j]!r}, t = {t!r}", grid.x[j], t
        )


def modified_diffusion(
    coeffs: CoefficientSet, grid: PeriodicGrid, t: float = 0.0, threshold: float = 0.0
) -> np.ndarray:
    """Pointwise ``b/|a|`` on the grid."""
    a = coeffs.a.sample(grid, t)
    _check_dispersion(a, grid, t, threshold)
    return coeffs.b.sample(grid, t) / np.abs(a)


def rounded_mean(values: np.ndarray) -> tuple[float, float]:
    """Exactly rounded mean of the samples and the floor below which it is noise.

    The samples themselves carry evaluation errors of a few ulps of their
    magnitude, so a mean smaller than ``ROUNDING_ULPS * eps * max|v|`` cannot
    be told apart from zero.
    """
    m = math.fsum(values) / len(values)
    floor = ROUNDING_ULPS * EPS * float(np.max(np.abs(values))) if len(values) else 0.0
    return m, floor


def mean_modified_diffusion(
    coeffs: CoefficientSet, grid: PeriodicGrid, t: float = 0.0, threshold: float = 0.0, raw: bool = False
) -> float:
    """Trapezoid mean of ``b/|a|``; means below rounding noise are returned as 0 unless ``raw``."""
    m, floor = rounded_mean(modified_diffusion(coeffs, grid, t, threshold))
    if raw:
        return m
    return 0.0 if abs(m) <= floor else m


def default_time_lattice(T: float, samples: int = 64) -> np.ndarray:
    return np.linspace(0.0, T, samples)


def classify(
    coeffs: CoefficientSet,
    grid: PeriodicGrid,
    times: Iterable[float] | None = None,
    tol: float | None = None,
    threshold: float = 0.0,
) -> WellPosednessVerdict:
    """Classify the problem from the sign pattern of the sampled mean modified diffusion."""
    times = default_time_lattice(coeffs.T) if times is None else np.asarray(list(times), dtype=float)
    if coeffs.depends_on_t:
        sample_times = times
    else:
        sample_times = times[:1]
    a0 = math.inf
    dbar = []
    dmax = 0.0
    for t in sample_times:
        a = coeffs.a.sample(grid, t)
        a0 = min(a0, float(np.min(np.abs(a))))
        small = np.abs(a) <= threshold
        flips = np.any(np.sign(a) != np.sign(a[0]))
        if small.any() or flips:
            j = int(np.flatnonzero(small)[0]) if small.any() else int(np.flatnonzero(np.sign(a) != np.sign(a[0]))[0])
            return WellPosednessVerdict(
                WellPosedness.DEGENERATE, a0, times, np.array([]), float("nan"), degenerate_at=(float(grid.x[j]), float(t))
            )
        delta = coeffs.b.sample(grid, t) / np.abs(a)
        m, floor = rounded_mean(delta)
        dbar.append(0.0 if abs(m) <= floor else m)
        dmax = max(dmax, float(np.max(np.abs(delta))))
    dbar = np.array(dbar)
    if not coeffs.depends_on_t:
        dbar = np.full(times.size, dbar[0])
    if tol is None:
        tol = 1e-10 * max(1.0, dmax)
    zero = np.abs(dbar) <= tol
    if np.any(dbar < -tol):
        klass, delta0 = WellPosedness.ILLPOSED, None
    elif zero.all():
        klass, delta0 = WellPosedness.REVERSIBLE, None
    elif not zero.any():
        klass, delta0 = WellPosedness.SMOOTHING, float(dbar.min())
    else:
        klass, delta0 = WellPosedness.WELLPOSED, None
    return WellPosednessVerdict(klass, a0, times, dbar, tol, delta0)


@dataclass
class AssumptionReport:
    a0: float
    sign_constant: bool
    a_sign: int
    degenerate: bool
    delta_bar_min: float
    delta_bar_max: float
    spectral_tail: Mapping[str, float] = field(default_factory=dict)
    resolved: Mapping[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "a0": self.a0,
            "sign_constant": self.sign_constant,
            "a_sign": self.a_sign,
            "degenerate": self.degenerate,
            "delta_bar_min": self.delta_bar_min,
            "delta_bar_max": self.delta_bar_max,
            "spectral_tail": dict(self.spectral_tail),
            "resolved": dict(self.resolved),
        }


def _spectral_tail(v: np.ndarray, grid: PeriodicGrid) -> float:
    """Largest coefficient above the two-thirds cutoff relative to the largest overall."""
    vh = np.abs(grid.fft(v))
    top = vh.max()
    if top == 0:
        return 0.0
    return float(vh[grid.cutoff + 1 :].max() / top)


def check_assumptions(
    coeffs: CoefficientSet,
    grid: PeriodicGrid,
    n: int = 4,
    times: Iterable[float] | None = None,
    tail_tol: float = 1e-10,
) -> AssumptionReport:
    """Report dispersion bounds, sign constancy, delta-bar extremes and a decay-based regularity flag.

    The regularity flag is advisory: samples cannot certify membership in a
    smoothness class, only that the coefficients are resolved on this grid.
    """
    times = default_time_lattice(coeffs.T) if times is None else np.asarray(list(times), dtype=float)
    if not coeffs.depends_on_t:
        times = times[:1]
    a0 = math.inf
    signs = set()
    dbar = []
    tails = {"a": 0.0, "b": 0.0}
    for t in times:
        a = coeffs.a.sample(grid, t)
        a0 = min(a0, float(np.min(np.abs(a))))
        signs.update(np.unique(np.sign(a)).tolist())
        tails["a"] = max(tails["a"], _spectral_tail(a, grid))
        tails["b"] = max(tails["b"], _spectral_tail(coeffs.b.sample(grid, t), grid))
        if a0 > 0:
            m, floor = rounded_mean(coeffs.b.sample(grid, t) / np.abs(a))
            dbar.append(0.0 if abs(m) <= floor else m)
    sign_constant = len(signs) == 1 and 0.0 not in signs
    degenerate = not sign_constant or a0 <= 0
    return AssumptionReport(
        a0=a0,
        sign_constant=sign_constant,
        a_sign=int(next(iter(signs))) if sign_constant else 0,
        degenerate=degenerate,
        delta_bar_min=float(min(dbar)) if dbar and not degenerate else float("nan"),
        delta_bar_max=float(max(dbar)) if dbar and not degenerate else float("nan"),
        spectral_tail=tails,
        resolved={k: v <= tail_tol for k, v in tails.items()},
    )
