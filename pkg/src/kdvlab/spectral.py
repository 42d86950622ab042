"""Periodic grid, Fourier transforms, spectral derivatives, energies and mollifiers.

All fields live on a uniform grid ``x_j = j*M/N`` over one period.  Spectral
coefficients use numpy's real FFT layout, so index ``j`` of a spectral array
stores the mode ``exp(i*k_j*x)`` with ``k_j = 2*pi*j/M`` for ``j = 0..N/2``.
The negative half of the symmetric wavenumber set is implied by conjugate
symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "PeriodicGrid",
    "Field",
    "MollifierSpec",
    "NonFiniteError",
    "bump_profile",
    "spectral_derivative",
    "sobolev_energy",
    "mollify",
    "dealias",
    "check_finite",
]


class NonFiniteError(ValueError):
    """Raised when a field contains NaN or Inf samples."""


def check_finite(values: np.ndarray, what: str = "field") -> None:
    """Raise NonFiniteError naming the first non-finite sample, if any."""
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NonFiniteError(f"{what} has non-finite value {values[idx]!r} at index {idx}")


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform collocation grid on ``[0, M)`` with ``N`` points.

    Parameters
    ----------
    M : float
        Period length.
    N : int
        Number of collocation points; must be even and at least 16.
    """

    M: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.M) and self.M > 0):
            raise ValueError(f"domain length must be positive, got {self.M}")
        if int(self.N) != self.N or self.N < 16 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 16, got {self.N}")
        object.__setattr__(self, "M", float(self.M))
        object.__setattr__(self, "N", int(self.N))

    @cached_property
    def dx(self) -> float:
        return self.M / self.N

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.N) * self.dx
        x.flags.writeable = False
        return x

    @cached_property
    def index(self) -> np.ndarray:
        """Non-negative integer mode indices ``0..N/2`` of the real FFT layout."""
        return np.arange(self.N // 2 + 1)

    @cached_property
    def k(self) -> np.ndarray:
        """Physical wavenumbers for the real FFT layout."""
        k = (2.0 * np.pi / self.M) * self.index
        k.flags.writeable = False
        return k

    @property
    def nyquist(self) -> int:
        return self.N // 2

    @cached_property
    def cutoff(self) -> int:
        """Largest mode index kept by the two-thirds rule."""
        return self.N // 3

    @cached_property
    def kmax(self) -> float:
        """Largest physical wavenumber that survives dealiasing."""
        return 2.0 * np.pi / self.M * self.cutoff

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        mask = (self.index <= self.cutoff).astype(float)
        mask.flags.writeable = False
        return mask

    def wavenumbers(self) -> np.ndarray:
        """Symmetric wavenumber set ``(2*pi/M) * {-N/2+1, ..., N/2}``."""
        j = np.arange(-self.N // 2 + 1, self.N // 2 + 1)
        return (2.0 * np.pi / self.M) * j

    def symbol(self, order: int) -> np.ndarray:
        """Multiplier ``(ik)**order`` with the Nyquist entry zeroed for odd orders."""
        return self._symbols(int(order))

    def _symbols(self, order: int) -> np.ndarray:
        cache = self.__dict__.setdefault("_symbol_cache", {})
        if order not in cache:
            s = (1j * self.k) ** order
            if order % 2 == 1:
                s[self.nyquist] = 0.0
            s.flags.writeable = False
            cache[order] = s
        return cache[order]

    # transforms --------------------------------------------------------
    def fft(self, u: np.ndarray) -> np.ndarray:
        return np.fft.rfft(u)

    def ifft(self, uh: np.ndarray) -> np.ndarray:
        return np.fft.irfft(uh, n=self.N)

    def diff(self, u: np.ndarray, order: int = 1) -> np.ndarray:
        """Spectral derivative of physical samples."""
        if order == 0:
            return np.array(u, dtype=float, copy=True)
        return self.ifft(self.symbol(order) * self.fft(u))

    def diff_hat(self, uh: np.ndarray, order: int = 1) -> np.ndarray:
        return self.symbol(order) * uh

    # quadrature --------------------------------------------------------
    def mean(self, u: np.ndarray) -> float:
        return float(np.mean(u))

    def integrate(self, u: np.ndarray) -> float:
        """Trapezoid rule over one period (equal weights on a periodic grid)."""
        return float(np.sum(u) * self.dx)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u, v) * self.dx)

    def norm2_hat(self, uh: np.ndarray) -> float:
        """Squared L2 norm from real-FFT coefficients (Parseval)."""
        w = np.full(uh.shape, 2.0)
        w[0] = 1.0
        w[self.nyquist] = 1.0
        return float(self.M / self.N**2 * np.sum(w * np.abs(uh) ** 2))

    def antiderivative(self, u: np.ndarray) -> np.ndarray:
        """Periodic antiderivative of the zero-mean part of ``u``, vanishing at x=0."""
        uh = self.fft(u)
        ik = 1j * self.k
        Fh = np.zeros_like(uh)
        Fh[1:] = uh[1:] / ik[1:]
        Fh[self.nyquist] = 0.0
        F = self.ifft(Fh)
        return F - F[0]

    def interpolate(self, u: np.ndarray, xq) -> np.ndarray:
        """Trigonometric interpolant of ``u`` evaluated at arbitrary points."""
        uh = self.fft(u)
        xq = np.atleast_1d(np.asarray(xq, dtype=float))
        c = uh.copy() / self.N
        c[1:] *= 2.0
        c[self.nyquist] *= 0.5
        # cos(N/2 x) is the only real interpretation of the Nyquist mode
        phase = np.exp(1j * np.outer(xq, self.k))
        vals = np.real(phase @ c)
        return vals


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples on a grid with a lazily computed spectral representation.

    A field built with :meth:`from_hat` keeps the supplied coefficients as
    its authoritative spectrum, so exactly band-limited data stays exact.
    """

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (self.grid.N,):
            raise ValueError(f"expected {self.grid.N} samples, got shape {v.shape}")
        check_finite(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @cached_property
    def hat(self) -> np.ndarray:
        h = self.grid.fft(self.values)
        h.flags.writeable = False
        return h

    @classmethod
    def from_hat(cls, grid: PeriodicGrid, hat: np.ndarray) -> "Field":
        hat = np.array(hat, dtype=complex, copy=True)
        if hat.shape != (grid.N // 2 + 1,):
            raise ValueError("spectral array has the wrong length for this grid")
        check_finite(hat, "spectrum")
        f = cls(grid, grid.ifft(hat))
        hat.flags.writeable = False
        f.__dict__["hat"] = hat
        return f

    @classmethod
    def trig(cls, grid: PeriodicGrid, sin=None, cos=None, const: float = 0.0) -> "Field":
        """Exactly band-limited trigonometric sum from ``{mode index: amplitude}`` maps.

        Unlisted modes are exactly zero in the spectrum, which sampling and
        transforming a formula cannot guarantee.
        """
        hat = np.zeros(grid.N // 2 + 1, dtype=complex)
        hat[0] = const * grid.N
        for table, factor in ((sin or {}, -0.5j), (cos or {}, 0.5)):
            for j, amp in table.items():
                if not 0 < int(j) < grid.nyquist:
                    raise ValueError(f"mode index must lie in 1..{grid.nyquist - 1}, got {j}")
                hat[int(j)] += factor * grid.N * amp
        return cls.from_hat(grid, hat)

    @classmethod
    def mode(cls, grid: PeriodicGrid, j: int, kind: str = "sin", amplitude: float = 1.0) -> "Field":
        """Exactly band-limited ``amplitude * sin(k_j x)`` or ``cos(k_j x)``."""
        if kind not in ("sin", "cos"):
            raise ValueError(f"unknown mode kind {kind!r}")
        return cls.trig(grid, **{kind: {j: amplitude}})

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.norm2_hat(self.hat)))

    def __len__(self):
        return self.grid.N


def bump_profile(s: np.ndarray) -> np.ndarray:
    """Smooth even bump with value 1 at 0, compact support in |s| < 1."""
    s = np.abs(np.asarray(s, dtype=float))
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class MollifierSpec:
    """Fourier-multiplier mollifier ``m_eps(k) = bump(eps * k)``."""

    grid: PeriodicGrid
    epsilon: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"mollifier epsilon must be positive, got {self.epsilon}")

    @cached_property
    def multiplier(self) -> np.ndarray:
        m = bump_profile(self.epsilon * self.grid.k)
        m.flags.writeable = False
        return m

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.grid.ifft(self.multiplier * self.grid.fft(u))

    def apply_hat(self, uh: np.ndarray) -> np.ndarray:
        return self.multiplier * uh


def _same_grid(f: Field, grid: PeriodicGrid) -> None:
    if f.grid != grid:
        raise ValueError("field and operator live on different grids")


def spectral_derivative(f: Field, order: int) -> Field:
    """Return the ``order``-th derivative of ``f`` via the multiplier (ik)^order."""
    if int(order) != order or order < 1:
        raise ValueError(f"derivative order must be a positive integer, got {order}")
    return Field.from_hat(f.grid, f.grid.symbol(order) * f.hat)


def sobolev_energy(f: Field, n: int, full: bool = False) -> float:
    """Energy ``0.5*||f||^2 + 0.5*||d^n f||^2`` computed through Parseval.

    With ``n = 0`` the two halves coincide and the result is ``||f||^2``.
    ``full=True`` sums ``0.5*||d^j f||^2`` over every ``j = 0..n`` instead.
    """
    if n < 0:
        raise ValueError("energy index must be non-negative")
    g = f.grid
    l2 = g.norm2_hat(f.hat)
    if full:
        return 0.5 * sum(g.norm2_hat(g.symbol(j) * f.hat) for j in range(n + 1))
    if n == 0:
        return l2
    return 0.5 * l2 + 0.5 * g.norm2_hat(g.symbol(n) * f.hat)


def mollify(f: Field, spec: MollifierSpec) -> Field:
    """Apply the mollifier ``J_eps`` to ``f``."""
    _same_grid(f, spec.grid)
    return Field.from_hat(f.grid, spec.multiplier * f.hat)


def dealias(f: Field) -> Field:
    """Zero every mode whose index exceeds N/3."""
    return Field.from_hat(f.grid, f.grid.dealias_mask * f.hat)
