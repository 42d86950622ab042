"""Quasilinear dispersive equations on positive data.

Equation kinds (all written as ``u_t = ...``):

* ``K22``:          ``2 u u_xxx + 6 u_x u_xx + 2 u u_x  = (u^2)_xxx + (u^2)_x``
* ``K22_W``:        the same flow for ``w = u**(1/beta)``, ``beta = 6/(9+2n)``
* ``HARRY_DYM``:    ``u^3 u_xxx``
* ``HARRY_DYM_W``:  the same flow for ``w = u**(1/beta)``, ``beta = 2/(2n-1)``
* ``GOODMAN_LAX``:  ``-u u_x - (Delta^2/6) u u_xxx``
* ``ZUMBRUN``:      ``-(u^2)_x - c2 a^2 (u u_xx)_x``

Nonlinear terms are formed pointwise in physical space, derivatives are
spectral, and every right-hand side is dealiased once.  Runs carry a
positivity guard at half the initial infimum and halt (never clamp) when
it is breached.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .coefficients import CoefficientSet, TabulatedCoefficient, mean_modified_diffusion
from .gauge import PowerGauge, PowerGaugeKind
from .integrators import IntegratorConfig, Scheme, Stepper, auto_dt, step_count
from .linear import EnergyTrace
from .spectral import Field, MollifierSpec, PeriodicGrid, check_finite, sobolev_energy

__all__ = [
    "QuasilinearKind",
    "QuasilinearEquation",
    "GuardStatus",
    "PositivityGuard",
    "PositivityError",
    "QuasilinearRun",
    "CancellationReport",
    "EnvelopeFit",
    "rhs_k22",
    "rhs_k22_w",
    "rhs_k22_w_mollified",
    "rhs_harry_dym",
    "rhs_dym_w",
    "rhs_dym_w_mollified",
    "rhs_goodman_lax",
    "rhs_zumbrun",
    "evolve_quasilinear",
    "conserved_quantities",
    "cancellation_coefficient",
    "energy_cascade_monitor",
    "fit_energy_envelope",
    "linearized_coefficients",
]


class QuasilinearKind(str, enum.Enum):
    K22 = "K22"
    K22_W = "K22_W"
    HARRY_DYM = "HARRY_DYM"
    HARRY_DYM_W = "HARRY_DYM_W"
    GOODMAN_LAX = "GOODMAN_LAX"
    ZUMBRUN = "ZUMBRUN"


_W_KINDS = {QuasilinearKind.K22_W: PowerGaugeKind.K22, QuasilinearKind.HARRY_DYM_W: PowerGaugeKind.HARRY_DYM}
_K22_FAMILY = (QuasilinearKind.K22, QuasilinearKind.K22_W)
_DYM_FAMILY = (QuasilinearKind.HARRY_DYM, QuasilinearKind.HARRY_DYM_W)


class PositivityError(ValueError):
    """A fractional power or reciprocal met a non-positive sample."""

    def __init__(self, message: str, x: float | None = None):
        self.x = x
        super().__init__(message)


@dataclass(frozen=True)
class QuasilinearEquation:
    """Equation kind with its parameters.

    ``delta`` is the Goodman-Lax mesh parameter; ``c2`` and ``zumbrun_a`` are
    the constants of the Zumbrun equation.  ``unsafe`` lets those two kinds
    run on sign-indefinite data without a positivity guard.
    """

    kind: QuasilinearKind
    n: int = 4
    delta: float = 0.1
    c2: float = 1.0
    zumbrun_a: float = 0.1
    unsafe: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", QuasilinearKind(self.kind))
        if self.n < 0:
            raise ValueError("regularity index must be non-negative")
        if self.kind in _DYM_FAMILY and self.n < 1:
            raise ValueError("the Harry Dym gauge needs n >= 1")
        if self.unsafe and self.kind not in (QuasilinearKind.GOODMAN_LAX, QuasilinearKind.ZUMBRUN):
            raise ValueError("only Goodman-Lax and Zumbrun runs may drop the positivity requirement")

    @property
    def power_gauge(self) -> PowerGauge | None:
        pk = _W_KINDS.get(self.kind)
        return PowerGauge(pk, self.n) if pk is not None else None

    @property
    def beta(self) -> float | None:
        pg = self.power_gauge
        return pg.beta if pg is not None else None

    @property
    def is_w_form(self) -> bool:
        return self.kind in _W_KINDS

    @property
    def requires_positivity(self) -> bool:
        return not self.unsafe

    @property
    def family(self) -> str:
        if self.kind in _K22_FAMILY:
            return "K22"
        if self.kind in _DYM_FAMILY:
            return "HARRY_DYM"
        return self.kind.value


# --------------------------------------------------------------------------
# spectral helpers


def _derivs(grid: PeriodicGrid, uh: np.ndarray, top: int) -> list[np.ndarray]:
    """Physical samples of ``u, u_x, ..., d^top u`` from a spectrum."""
    return [grid.ifft(uh)] + [grid.ifft(grid.symbol(j) * uh) for j in range(1, top + 1)]


def _finish(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    return grid.dealias_mask * grid.fft(values)


def _positive(values: np.ndarray, grid: PeriodicGrid, what: str) -> None:
    bad = ~(values > 0)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise PositivityError(f"{what} must be positive; found {values[j]!r} at x = {grid.x[j]!r}", float(grid.x[j]))


def _k22_terms(W, W1, W2, W3, beta):
    wb = W**beta
    return (
        2.0 * wb * W3
        + (12.0 * beta - 6.0) * W ** (beta - 1.0) * W1 * W2
        + (beta - 1.0) * (8.0 * beta - 4.0) * W ** (beta - 2.0) * W1**3
        + 2.0 * wb * W1
    )


def _dym_terms(W, W1, W2, W3, beta):
    return (
        W ** (3.0 * beta) * W3
        + 3.0 * (beta - 1.0) * W ** (3.0 * beta - 1.0) * W1 * W2
        + (beta - 1.0) * (beta - 2.0) * W ** (3.0 * beta - 2.0) * W1**3
    )


def _k22_hat(grid, uh, literal=False):
    if literal:
        U, U1, U2, U3 = _derivs(grid, uh, 3)
        return _finish(grid, 2.0 * U * U3 + 6.0 * U1 * U2 + 2.0 * U * U1)
    sq = _finish(grid, grid.ifft(uh) ** 2)
    return (grid.symbol(3) + grid.symbol(1)) * sq


def _k22_w_hat(grid, wh, beta):
    W, W1, W2, W3 = _derivs(grid, wh, 3)
    _positive(W, grid, "w")
    return _finish(grid, _k22_terms(W, W1, W2, W3, beta))


def _mollified_hat(grid, wh, beta, spec, terms):
    m = spec.multiplier
    W, W1, W2, W3 = _derivs(grid, m * wh, 3)
    _positive(W, grid, "J_eps w")
    return m * _finish(grid, terms(W, W1, W2, W3, beta))


def _dym_hat(grid, uh):
    U = grid.ifft(uh)
    _positive(U, grid, "u")
    U3 = grid.ifft(grid.symbol(3) * uh)
    return _finish(grid, U**3 * U3)


def _dym_w_hat(grid, wh, beta):
    W, W1, W2, W3 = _derivs(grid, wh, 3)
    _positive(W, grid, "w")
    return _finish(grid, _dym_terms(W, W1, W2, W3, beta))


def _gl_hat(grid, uh, delta):
    U, U1, _, U3 = _derivs(grid, uh, 3)
    return _finish(grid, -U * U1 - (delta**2 / 6.0) * U * U3)


def _zumbrun_hat(grid, uh, c2, a):
    U, _, U2 = _derivs(grid, uh, 2)
    sq = _finish(grid, U**2)
    flux = _finish(grid, U * U2)
    return -grid.symbol(1) * sq - c2 * a**2 * grid.symbol(1) * flux


def _check_field(f: Field) -> None:
    check_finite(f.values)


def rhs_k22(u: Field, literal: bool = False) -> Field:
    """``(u^2)_xxx + (u^2)_x``; ``literal=True`` evaluates ``2uu_xxx + 6u_xu_xx + 2uu_x`` instead."""
    _check_field(u)
    return Field.from_hat(u.grid, _k22_hat(u.grid, u.hat, literal))


def rhs_k22_w(w: Field, beta: float) -> Field:
    """Right side of the ``w = u**(1/beta)`` form of K(2,2)."""
    _check_field(w)
    return Field.from_hat(w.grid, _k22_w_hat(w.grid, w.hat, beta))


def rhs_k22_w_mollified(w: Field, beta: float, spec: MollifierSpec) -> Field:
    """``J[2 (Jw)^b Jw_xxx + (12b-6)(Jw)^(b-1) Jw_x Jw_xx + (b-1)(8b-4)(Jw)^(b-2) (Jw_x)^3 + 2 (Jw)^b Jw_x]``."""
    _check_field(w)
    if spec.grid != w.grid:
        raise ValueError("mollifier and field live on different grids")
    return Field.from_hat(w.grid, _mollified_hat(w.grid, w.hat, beta, spec, _k22_terms))


def rhs_harry_dym(u: Field) -> Field:
    """``u^3 u_xxx``."""
    _check_field(u)
    return Field.from_hat(u.grid, _dym_hat(u.grid, u.hat))


def rhs_dym_w(w: Field, beta: float) -> Field:
    """``w^(3b) w_xxx + 3(b-1) w^(3b-1) w_x w_xx + (b-1)(b-2) w^(3b-2) w_x^3``."""
    _check_field(w)
    return Field.from_hat(w.grid, _dym_w_hat(w.grid, w.hat, beta))


def rhs_dym_w_mollified(w: Field, beta: float, spec: MollifierSpec) -> Field:
    """Harry Dym w-form with the same mollifier placement as the K(2,2) w-system."""
    _check_field(w)
    if spec.grid != w.grid:
        raise ValueError("mollifier and field live on different grids")
    return Field.from_hat(w.grid, _mollified_hat(w.grid, w.hat, beta, spec, _dym_terms))


def rhs_goodman_lax(u: Field, delta: float) -> Field:
    """``-u u_x - (delta^2/6) u u_xxx``."""
    _check_field(u)
    return Field.from_hat(u.grid, _gl_hat(u.grid, u.hat, delta))


def rhs_zumbrun(u: Field, c2: float, a: float) -> Field:
    """``-(u^2)_x - c2 a^2 (u u_xx)_x``."""
    _check_field(u)
    return Field.from_hat(u.grid, _zumbrun_hat(u.grid, u.hat, c2, a))


def _spectral_rhs(eq: QuasilinearEquation, grid: PeriodicGrid, mollifier: MollifierSpec | None):
    k = eq.kind
    beta = eq.beta
    if mollifier is not None:
        if k is QuasilinearKind.K22_W:
            return lambda sh, t: _mollified_hat(grid, sh, beta, mollifier, _k22_terms)
        if k is QuasilinearKind.HARRY_DYM_W:
            return lambda sh, t: _mollified_hat(grid, sh, beta, mollifier, _dym_terms)
        raise ValueError(f"no mollified system is defined for {k.value}")
    if k is QuasilinearKind.K22:
        return lambda sh, t: _k22_hat(grid, sh)
    if k is QuasilinearKind.K22_W:
        return lambda sh, t: _k22_w_hat(grid, sh, beta)
    if k is QuasilinearKind.HARRY_DYM:
        return lambda sh, t: _dym_hat(grid, sh)
    if k is QuasilinearKind.HARRY_DYM_W:
        return lambda sh, t: _dym_w_hat(grid, sh, beta)
    if k is QuasilinearKind.GOODMAN_LAX:
        return lambda sh, t: _gl_hat(grid, sh, eq.delta)
    return lambda sh, t: _zumbrun_hat(grid, sh, eq.c2, eq.zumbrun_a)


# --------------------------------------------------------------------------
# linearization and diagnostics


def _frozen_coefficients(state: np.ndarray, grid: PeriodicGrid, eq: QuasilinearEquation) -> dict[str, np.ndarray]:
    """Coefficients (a, b, c) of the equation with the state frozen into them."""
    S, S1 = grid.ifft(grid.fft(state)), grid.diff(state, 1)
    k = eq.kind
    if k is QuasilinearKind.K22:
        return {"a": 2 * S, "b": 6 * S1, "c": 2 * S}
    if k is QuasilinearKind.HARRY_DYM:
        return {"a": S**3, "b": np.zeros_like(S), "c": np.zeros_like(S)}
    if k is QuasilinearKind.K22_W:
        b = eq.beta
        return {
            "a": 2 * S**b,
            "b": (12 * b - 6) * S ** (b - 1) * S1,
            "c": (b - 1) * (8 * b - 4) * S ** (b - 2) * S1**2 + 2 * S**b,
        }
    if k is QuasilinearKind.HARRY_DYM_W:
        b = eq.beta
        return {
            "a": S ** (3 * b),
            "b": 3 * (b - 1) * S ** (3 * b - 1) * S1,
            "c": (b - 1) * (b - 2) * S ** (3 * b - 2) * S1**2,
        }
    if k is QuasilinearKind.GOODMAN_LAX:
        return {"a": -(eq.delta**2 / 6) * S, "b": np.zeros_like(S), "c": -S}
    s = eq.c2 * eq.zumbrun_a**2
    return {"a": -s * S, "b": -s * S1, "c": -2 * S}


def linearized_coefficients(state: Field, eq: QuasilinearEquation) -> CoefficientSet:
    """Frozen-coefficient linear equation, e.g. ``a = 2u, b = 6u_x, c = 2u`` for K(2,2).

    ``state`` is ``w`` for the w-forms and ``u`` otherwise.
    """
    fc = _frozen_coefficients(state.values, state.grid, eq)
    zero = np.zeros(state.grid.N)
    return CoefficientSet(
        a=TabulatedCoefficient(fc["a"]),
        b=TabulatedCoefficient(fc["b"]),
        c=TabulatedCoefficient(fc["c"]),
        d=TabulatedCoefficient(zero),
        e=TabulatedCoefficient(zero),
    )


def conserved_quantities(u: Field, kind) -> dict[str, float]:
    """Trapezoid values of the invariants of the equation family of ``kind``.

    K(2,2): ``int u^3`` and ``int u``.  Harry Dym: ``int 1/u`` and ``int 1/u^2``.
    Goodman-Lax and Zumbrun: ``int u``.
    """
    if isinstance(kind, QuasilinearEquation):
        kind = kind.kind
    kind = QuasilinearKind(kind)
    g = u.grid
    v = u.values
    if kind in _K22_FAMILY:
        return {"int_u3": g.integrate(v**3), "int_u": g.integrate(v)}
    if kind in _DYM_FAMILY:
        _positive(v, g, "u")
        return {"int_inv_u": g.integrate(1.0 / v), "int_inv_u2": g.integrate(1.0 / v**2)}
    return {"int_u": g.integrate(v)}


# --------------------------------------------------------------------------
# positivity guard


class GuardStatus(str, enum.Enum):
    OK = "OK"
    TOUCHDOWN_IMMINENT = "TOUCHDOWN_IMMINENT"
    HALTED = "HALTED"


@dataclass
class PositivityGuard:
    """Running infimum ``m(t) = min_x u(x, t)`` checked against ``floor``.

    ``floor`` is half the initial infimum.  ``sign_changes`` counts steps at
    which ``m`` changed sign while the guard was still OK; it must stay 0.
    """

    floor: float | None
    a0: float
    t: list = field(default_factory=list)
    m: list = field(default_factory=list)
    status: GuardStatus = GuardStatus.OK
    breach_time: float | None = None
    breach_x: float | None = None
    breach_value: float | None = None
    sign_changes: int = 0
    message: str = ""

    @property
    def enabled(self) -> bool:
        return self.floor is not None

    def observe(self, t: float, u: np.ndarray) -> bool:
        """Record ``m(t)``; return False when the floor is breached."""
        m = float(np.min(u))
        if self.m and self.status is GuardStatus.OK and np.sign(m) != np.sign(self.m[0]):
            self.sign_changes += 1
        self.t.append(float(t))
        self.m.append(m)
        return not (self.enabled and m < self.floor)

    def halt(self, status: GuardStatus, t: float, x: float | None, value: float | None, message: str) -> None:
        self.status = status
        self.breach_time = float(t)
        self.breach_x = None if x is None else float(x)
        self.breach_value = None if value is None else float(value)
        self.message = message

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "floor": self.floor,
            "a0": self.a0,
            "m_min": float(min(self.m)) if self.m else None,
            "breach_time": self.breach_time,
            "breach_x": self.breach_x,
            "breach_value": self.breach_value,
            "sign_changes": self.sign_changes,
        }


@dataclass
class QuasilinearRun:
    """Trajectory of ``u`` (and of the evolved state, which is ``w`` for the w-forms)."""

    equation: QuasilinearEquation
    times: list
    fields: list
    states: list
    trace: EnergyTrace
    guard: PositivityGuard
    dt: float
    steps: int
    steps_taken: int

    @property
    def final(self) -> Field:
        return self.fields[-1]

    @property
    def status(self) -> str:
        if self.trace.blowup:
            return "BLOWUP"
        if self.guard.status is GuardStatus.TOUCHDOWN_IMMINENT:
            return "GUARD"
        return "OK"

    def drift(self, name: str) -> float:
        """Largest relative deviation of a conserved quantity from its initial value."""
        v = np.asarray(self.trace.extra[name])
        return float(np.max(np.abs(v - v[0])) / abs(v[0]))


def _auto_dt(eq, state, grid, cfg, mollifier):
    fc = _frozen_coefficients(state, grid, eq)
    a = fc["a"]
    abar = math.fsum(a) / grid.N
    A = float(np.max(np.abs(a - abar))) if cfg.scheme is Scheme.RK4_IF else float(np.max(np.abs(a)))
    kmax = grid.kmax if mollifier is None else min(grid.kmax, 1.0 / mollifier.epsilon)
    return auto_dt(kmax, A, float(np.max(np.abs(fc["b"]))), float(np.max(np.abs(fc["c"]))), 0.0, cfg.cfl_c), abar


def evolve_quasilinear(
    u0: Field,
    eq: QuasilinearEquation,
    cfg: IntegratorConfig,
    mollifier: MollifierSpec | None = None,
    keep_fields: bool = True,
    bisection_steps: int = 40,
) -> QuasilinearRun:
    """Integrate a quasilinear equation from ``u0`` to ``cfg.t_end``.

    For the w-forms the state is ``w0 = u0**(1/beta)`` and the reported
    fields are ``u = w**beta``.  The integrating factor uses the mean of the
    frozen dispersion coefficient at ``t = 0``.  Every accepted step is
    checked against the guard level ``min(u0)/2``; on a breach the step is
    bisected to locate the first time below the floor and the run halts.
    """
    grid = u0.grid
    _check_field(u0)
    a0 = float(np.min(u0.values))
    if eq.requires_positivity:
        if not a0 > 0:
            j = int(np.argmin(u0.values))
            raise PositivityError(
                f"initial data must be positive; min u0 = {a0!r} at x = {grid.x[j]!r}", float(grid.x[j])
            )
        floor = 0.5 * a0
    else:
        floor = None
    beta = eq.beta
    state = u0.hat.copy() if beta is None else grid.fft(u0.values ** (1.0 / beta))
    rhs = _spectral_rhs(eq, grid, mollifier)
    auto, abar = _auto_dt(eq, grid.ifft(state), grid, cfg, mollifier)
    dt = auto if cfg.dt == "AUTO" else float(cfg.dt)
    steps, h = step_count(cfg.t_end, dt)
    stepper = Stepper(grid, rhs, abar, cfg.scheme)

    trace = EnergyTrace(n=eq.n)
    guard = PositivityGuard(floor, a0)
    times, fields, states = [], [], []

    def to_u(sh):
        s = grid.ifft(sh)
        return s if beta is None else s**beta

    def emit(t, sh, u):
        uf = Field(grid, u)
        sf = Field.from_hat(grid, sh)
        try:
            cq = conserved_quantities(uf, eq.kind)
        except PositivityError:
            cq = {}
        try:
            fc = _frozen_coefficients(sf.values, grid, eq)
            cs = CoefficientSet(a=TabulatedCoefficient(fc["a"]), b=TabulatedCoefficient(fc["b"]))
            dbar = mean_modified_diffusion(cs, grid)
        except ValueError:
            dbar = float("nan")
        state_energy = sobolev_energy(sf, eq.n) if beta is not None else float("nan")
        trace.record(t, uf, dbar, state_energy, **cq)
        if keep_fields or not fields:
            times.append(float(t))
            fields.append(uf)
            states.append(sf)
        else:
            times[-1], fields[-1], states[-1] = float(t), uf, sf

    def attempt(sh, t, tau):
        try:
            with np.errstate(all="ignore"):
                new = stepper.step(sh, t, tau)
        except PositivityError:
            return None, None
        if not np.all(np.isfinite(new)):
            return None, None
        with np.errstate(all="ignore"):
            u = to_u(new)
        if not np.all(np.isfinite(u)):
            return None, None
        return new, u

    u_init = to_u(state)
    emit(0.0, state, u_init)
    guard.observe(0.0, u_init)
    e0 = max(sobolev_energy(u0, eq.n), np.finfo(float).tiny)
    limit = cfg.blowup_factor * e0
    t = 0.0
    taken = 0
    for i in range(1, steps + 1):
        t_new = i * h
        new, u = attempt(state, t, h)
        if new is not None and sobolev_energy(Field(grid, u), eq.n) > limit:
            trace.blowup, trace.blowup_time, trace.status = True, t_new, "BLOWUP"
            guard.halt(GuardStatus.HALTED, t_new, None, None, "energy exceeded the blow-up threshold")
            emit(t_new, new, u)
            break
        breached = new is None or not guard.observe(t_new, u)
        if breached:
            if new is not None:
                guard.t.pop()
                guard.m.pop()
            tb, xb, mb, clean = _bisect_breach(attempt, state, t, h, guard.floor, grid, bisection_steps)
            if clean:
                guard.halt(GuardStatus.TOUCHDOWN_IMMINENT, tb, xb, mb, "positivity floor breached")
                trace.status = "GUARD"
            else:
                trace.blowup, trace.blowup_time, trace.status = True, tb, "BLOWUP"
                guard.halt(GuardStatus.HALTED, tb, None, None, "non-finite values")
            if new is not None:
                emit(t_new, new, u)
            break
        state, t = new, t_new
        taken = i
        if i % cfg.output_every == 0 or i == steps:
            emit(t, state, u)
    return QuasilinearRun(eq, times, fields, states, trace, guard, h, steps, taken)


def _bisect_breach(attempt, state, t, h, floor, grid, iters):
    """Shrink the failing step to the first sub-step whose minimum falls below ``floor``.

    Returns ``(time, x, value, clean)``; ``clean`` is False when the step
    failed (non-finite values) without any sub-step crossing the floor.
    """
    lo, hi = 0.0, h
    hi_u = None
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        _, u = attempt(state, t, mid)
        if u is None or (floor is not None and np.min(u) < floor):
            hi = mid
            if u is not None:
                hi_u = u
        else:
            lo = mid
    if hi_u is None:
        _, hi_u = attempt(state, t, hi)
    if hi_u is None:
        return t + hi, None, None, False
    j = int(np.argmin(hi_u))
    clean = floor is not None and hi_u[j] < floor
    return t + hi, float(grid.x[j]), float(hi_u[j]), clean


# --------------------------------------------------------------------------
# cancellation monitor and energy envelope


def _family(kind) -> PowerGaugeKind:
    if isinstance(kind, PowerGaugeKind):
        return kind
    k = QuasilinearKind(kind)
    if k in _K22_FAMILY:
        return PowerGaugeKind.K22
    if k in _DYM_FAMILY:
        return PowerGaugeKind.HARRY_DYM
    raise ValueError(f"{k.value} has no power gauge")


def cancellation_coefficient(kind, n: int, beta):
    """Scalar in front of the top-order energy term.

    K(2,2): ``-9b - 2bn + 6``; Harry Dym: ``3b/2 - 3bn + 3``.  Exact when
    ``beta`` is a Fraction.
    """
    if _family(kind) is PowerGaugeKind.K22:
        return -9 * beta - 2 * beta * n + 6
    return Fraction(3, 2) * beta - 3 * beta * n + 3


@dataclass
class CancellationReport:
    kind: str
    n: int
    beta: Fraction
    coefficient: Fraction
    perturbed_beta: float
    perturbed_coefficient: float
    t: np.ndarray
    monitored: np.ndarray
    perturbed: np.ndarray

    @property
    def cancels(self) -> bool:
        return self.coefficient == 0 and bool(np.all(self.monitored == 0.0))

    @property
    def perturbed_max(self) -> float:
        return float(np.max(np.abs(self.perturbed)))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "beta": str(self.beta),
            "coefficient": str(self.coefficient),
            "perturbed_beta": self.perturbed_beta,
            "perturbed_coefficient": self.perturbed_coefficient,
            "monitored_max": float(np.max(np.abs(self.monitored))),
            "perturbed_max": self.perturbed_max,
            "cancels": self.cancels,
        }


def _monitored_integral(w: Field, beta: float, n: int, coefficient: float, family: PowerGaugeKind, spec) -> float:
    """``coefficient * int w^p w_x (J d^(n+1) w)^2`` with ``p = beta-1`` (K22) or ``3beta-1`` (Harry Dym)."""
    g = w.grid
    W = w.values
    _positive(W, g, "w")
    top = g.symbol(n + 1) * w.hat
    if spec is not None:
        top = spec.multiplier * top
    p = beta - 1.0 if family is PowerGaugeKind.K22 else 3.0 * beta - 1.0
    integrand = W**p * g.diff(W, 1) * g.ifft(top) ** 2
    return float(coefficient) * g.integrate(integrand)


def energy_cascade_monitor(
    states, n: int, kind=QuasilinearKind.K22_W, times=None, perturbation: float = 0.05, mollifier=None
) -> CancellationReport:
    """Evaluate the top-order energy term along a w-trajectory.

    With the gauge exponent the scalar coefficient is exactly zero, so the
    monitored term vanishes identically.  With ``beta + perturbation`` the
    coefficient and the integral are generically nonzero.
    """
    if isinstance(states, QuasilinearRun):
        times = states.times if times is None else times
        states = states.states
    fam = _family(kind)
    beta = PowerGauge(fam, n).beta_exact
    coeff = cancellation_coefficient(fam, n, beta)
    pb = float(beta) + perturbation
    pcoeff = float(cancellation_coefficient(fam, n, pb))
    mon = np.array([_monitored_integral(w, float(beta), n, coeff, fam, mollifier) for w in states])
    pert = np.array([_monitored_integral(w, pb, n, pcoeff, fam, mollifier) for w in states])
    t = np.asarray(times if times is not None else np.arange(len(states)), dtype=float)
    return CancellationReport(fam.value, n, beta, coeff, pb, pcoeff, t, mon, pert)


@dataclass
class EnvelopeFit:
    """``dE/dt <= C1 exp(C2 E)`` fitted over a trace."""

    C1: float
    C2: float
    slack: np.ndarray


def fit_energy_envelope(t, E) -> EnvelopeFit:
    """Fit ``C2`` by least squares on ``log(dE/dt)`` against ``E`` and lift ``C1`` to dominate every sample.

    Samples where the energy does not grow impose no constraint; with no
    growth at all both constants are 0.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if t.size < 3:
        raise ValueError("need at least three samples to fit an envelope")
    dE = np.gradient(E, t)
    grow = dE > 0
    if not grow.any():
        return EnvelopeFit(0.0, 0.0, -dE)
    if grow.sum() >= 2 and np.ptp(E[grow]) > 0:
        C2 = max(0.0, float(np.polyfit(E[grow], np.log(dE[grow]), 1)[0]))
    else:
        C2 = 0.0
    C1 = float(np.max(dE[grow] * np.exp(-C2 * E[grow])))
    return EnvelopeFit(C1, C2, C1 * np.exp(C2 * E) - dE)
