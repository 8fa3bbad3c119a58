"""Fractional Laplacian on periodic grids.

The periodic box [-L, L)^N stands in for R^N. Fourier transforms are
unnormalized (scipy.fft conventions); norms use the Riemann sum
``||f||^2 = h^N sum |f_j|^2`` so Parseval reads
``||f||^2 = h^N / M^N sum |F_k|^2``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, InputError
from .quadrature import MQuadrature

_WORKERS = int(os.environ.get("FRACVIRIAL_THREADS", "1") or 1)


def fftn(a):
    return sfft.fftn(a, workers=_WORKERS)


def ifftn(a):
    return sfft.ifftn(a, workers=_WORKERS)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L, L)^dim with M points per dimension."""

    dim: int
    half_length: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InputError(f"only dim 1 or 2 is supported, got {self.dim}")
        if not (self.half_length > 0 and math.isfinite(self.half_length)):
            raise InputError(f"half_length must be positive, got {self.half_length}")
        m = int(self.points)
        if m < 4 or m & (m - 1):
            raise InputError(f"points per dimension must be a power of two >= 4, got {self.points}")
        object.__setattr__(self, "points", m)
        object.__setattr__(self, "half_length", float(self.half_length))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def box_volume(self) -> float:
        return (2.0 * self.half_length) ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.points)

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def wavenumbers_1d(self) -> np.ndarray:
        # pi k / L for k = -M/2..M/2-1, in FFT order
        return 2.0 * np.pi * sfft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def wavevectors(self) -> tuple:
        return tuple(np.meshgrid(*([self.wavenumbers_1d] * self.dim), indexing="ij"))

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(k * k for k in self.wavevectors)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def spectral_range(self) -> tuple:
        """Smallest nonzero and largest value of |xi|^2 on the grid."""
        k = self.ksq
        return float(k[k > 0].min()), float(k.max())

    @property
    def parseval(self) -> float:
        """Factor turning sum |F_k|^2 into ||f||^2."""
        return self.cell_volume / self.points ** self.dim

    def field(self, values) -> "FieldOnGrid":
        return FieldOnGrid(self, values)

    def zeros(self) -> "FieldOnGrid":
        return FieldOnGrid(self, np.zeros(self.shape, dtype=complex))

    def plane_wave(self, k, amplitude: complex = 1.0) -> "FieldOnGrid":
        """amplitude * exp(i k.x); k must be a grid wavevector (integer multiple of pi/L)."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        if k.size != self.dim:
            raise InputError(f"wavevector needs {self.dim} components")
        phase = sum(kj * xj for kj, xj in zip(k, self.coords))
        return FieldOnGrid(self, amplitude * np.exp(1j * phase))

    def gaussian(self, amplitude: float = 1.0, width: float = 1.0, center=None) -> "FieldOnGrid":
        """amplitude * exp(-|x - center|^2 / width^2)."""
        center = np.zeros(self.dim) if center is None else np.atleast_1d(np.asarray(center, float))
        r2 = sum((xj - cj) ** 2 for xj, cj in zip(self.coords, center))
        return FieldOnGrid(self, amplitude * np.exp(-r2 / width ** 2).astype(complex))

    def random_bandlimited(self, rng: np.random.Generator, band: float, decay: float = 1.0,
                           real: bool = False) -> "FieldOnGrid":
        """Random smooth field with Fourier support in |xi| <= band.

        Coefficients are complex Gaussian damped by exp(-decay |xi|^2 / band^2)
        so the field is smooth as well as band-limited.
        """
        shape = self.shape
        coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        coef *= np.exp(-decay * self.ksq / band ** 2) * (self.kabs <= band)
        vals = ifftn(coef)
        if real:
            vals = vals.real.astype(complex)
        vals /= np.sqrt(self.cell_volume * np.sum(np.abs(vals) ** 2))
        return FieldOnGrid(self, vals)


@dataclass(frozen=True, eq=False)
class FieldOnGrid:
    """Complex samples of a function on a periodic Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            try:
                vals = vals.reshape(self.grid.shape)
            except ValueError:
                raise InputError(f"values of shape {vals.shape} do not fit grid {self.grid.shape}") from None
        if not np.all(np.isfinite(vals)):
            raise InputError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "FieldOnGrid":
        return FieldOnGrid(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def fft(self) -> np.ndarray:
        return fftn(self.values)

    def mass(self) -> float:
        return float(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2))

    def l2_norm(self) -> float:
        return math.sqrt(self.mass())

    def lp_power(self, p: float) -> float:
        """int |u|^p dx."""
        return float(self.grid.cell_volume * np.sum(np.abs(self.values) ** p))

    def inner(self, other) -> complex:
        """<self, other> = int conj(self) other dx."""
        return complex(self.grid.cell_volume * np.vdot(self.values, _vals(other)))

    def boundary_mass_fraction(self, margin: float = 0.1) -> float:
        """Fraction of mass with some |x_j| > (1 - margin) L."""
        edge = (1.0 - margin) * self.grid.half_length
        mask = np.zeros(self.grid.shape, dtype=bool)
        for c in self.grid.coords:
            mask |= np.abs(c) > edge
        total = np.sum(np.abs(self.values) ** 2)
        if total == 0:
            return 0.0
        return float(np.sum(np.abs(self.values[mask]) ** 2) / total)


def _vals(x):
    return x.values if isinstance(x, FieldOnGrid) else x


@dataclass(frozen=True)
class FracParams:
    """Exponents of the focusing equation i u_t = (-Delta)^s u - |u|^(2 sigma) u in R^dim."""

    s: float
    sigma: float
    dim: int

    def __post_init__(self):
        if not (0 < self.s < 1):
            raise DomainError(f"s must lie in (0, 1), got {self.s}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim}")

    @property
    def s_c(self) -> float:
        """Scaling index N/2 - s/sigma."""
        return self.dim / 2.0 - self.s / self.sigma

    @property
    def delta(self) -> float:
        """sigma N - 2 s, the coercivity constant of the virial law."""
        return self.sigma * self.dim - 2.0 * self.s

    @property
    def p(self) -> float:
        """Exponent 2 sigma + 2 of the potential energy."""
        return 2.0 * self.sigma + 2.0

    @property
    def l2_critical(self) -> bool:
        return abs(self.sigma - 2.0 * self.s / self.dim) <= 1e-12

    def validate_radial_blowup(self) -> None:
        """Raise DomainError unless N >= 2, s in (1/2,1), 0 <= s_c <= s, sigma < 2s."""
        problems = []
        if self.dim < 2:
            problems.append(f"N = {self.dim} < 2")
        if not (0.5 < self.s < 1):
            problems.append(f"s = {self.s} not in (1/2, 1)")
        sc = self.s_c
        if sc < -1e-12:
            problems.append(f"s_c = {sc:g} < 0")
        if sc > self.s + 1e-12:
            problems.append(f"s_c = {sc:g} > s = {self.s}")
        if not self.sigma < 2 * self.s:
            problems.append(f"sigma = {self.sigma} >= 2s = {2 * self.s}")
        if problems:
            raise DomainError("outside the radial blowup regime: " + "; ".join(problems))


def _check_field(u) -> FieldOnGrid:
    if not isinstance(u, FieldOnGrid):
        raise InputError(f"expected FieldOnGrid, got {type(u).__name__}")
    if not np.all(np.isfinite(u.values)):
        raise InputError("field contains non-finite values")
    return u


def frac_multiplier(grid: Grid, s: float) -> np.ndarray:
    """|xi|^(2s) with the zero mode mapped to 0."""
    k2 = grid.ksq
    out = np.zeros_like(k2)
    nz = k2 > 0
    out[nz] = k2[nz] ** s
    return out


def frac_laplacian(u: FieldOnGrid, s: float) -> FieldOnGrid:
    """(-Delta)^s u through the Fourier multiplier |xi|^(2s), 0 < s <= 2."""
    _check_field(u)
    if not (0 < s <= 2):
        raise DomainError(f"frac_laplacian needs 0 < s <= 2, got {s}")
    return u.with_values(ifftn(frac_multiplier(u.grid, s) * u.fft()))


def frac_seminorm(u: FieldOnGrid, s: float) -> float:
    """||(-Delta)^(s/2) u||_{L^2}; s = 0 gives the L^2 norm."""
    _check_field(u)
    if s < 0:
        raise DomainError(f"frac_seminorm needs s >= 0, got {s}")
    g = u.grid
    spec = np.abs(u.fft()) ** 2
    if s == 0:
        return math.sqrt(g.parseval * spec.sum())
    return math.sqrt(g.parseval * np.sum(frac_multiplier(g, s / 2.0) ** 2 * spec))


def gradient(u: FieldOnGrid) -> list:
    """Spectral gradient, one complex array per dimension."""
    uh = u.fft()
    return [ifftn(1j * k * uh) for k in u.grid.wavevectors]


def c_s(s: float) -> float:
    """Normalization sqrt(sin(pi s)/pi) of the resolvent fields."""
    return math.sqrt(math.sin(math.pi * s) / math.pi)


def resolvent_multiplier(grid: Grid, m: float, s: float) -> np.ndarray:
    return c_s(s) / (grid.ksq + m)


def resolvent_field(u: FieldOnGrid, m: float, s: float) -> FieldOnGrid:
    """u_m = c_s (-Delta + m)^{-1} u, applied spectrally; zero mode maps to c_s u_0 / m."""
    _check_field(u)
    if not m > 0:
        raise DomainError(f"resolvent parameter m must be positive, got {m}")
    if not (0 < s < 1):
        raise DomainError(f"s must lie in (0, 1), got {s}")
    return u.with_values(ifftn(resolvent_multiplier(u.grid, m, s) * u.fft()))


def balakrishnan_scalar(x: float, s: float, q: MQuadrature | None = None) -> float:
    """(sin(pi s)/pi) int_0^inf m^(s-1) x/(x+m) dm, which equals x^s."""
    if not x > 0:
        raise DomainError(f"balakrishnan_scalar needs x > 0, got {x}")
    if not (0 < s < 1):
        raise DomainError(f"s must lie in (0, 1), got {s}")
    q = q or MQuadrature()
    rule = q.rule(x, x, s)
    w = rule.weights(s - 1.0)
    return float(math.sin(math.pi * s) / math.pi * np.sum(w * x / (x + rule.m)))


def _chunks(n, size):
    for i in range(0, n, size):
        yield slice(i, min(i + size, n))


def balakrishnan_apply(u: FieldOnGrid, s: float, q: MQuadrature | None = None) -> FieldOnGrid:
    """(-Delta)^s u = (sin(pi s)/pi) int m^(s-1) (-Delta)(-Delta+m)^{-1} u dm by quadrature.

    Each resolvent is applied in Fourier space and the node contributions are
    accumulated there; a single inverse transform finishes the job.
    """
    _check_field(u)
    if not (0 < s < 1):
        raise DomainError(f"balakrishnan_apply needs s in (0, 1), got {s}")
    q = q or MQuadrature()
    g = u.grid
    rule = q.rule(*g.spectral_range, s)
    w = rule.weights(s - 1.0) * (math.sin(math.pi * s) / math.pi)
    m = rule.m
    k2 = g.ksq.ravel()
    mult = np.zeros_like(k2)
    for sl in _chunks(len(m), 32):
        mult += (k2[:, None] / (k2[:, None] + m[None, sl])) @ w[sl]
    return u.with_values(ifftn(mult.reshape(g.shape) * u.fft()))


def weighted_gradient_integral(u: FieldOnGrid, s: float, q: MQuadrature | None = None) -> float:
    """int_0^inf m^s ||grad u_m||^2 dm by quadrature (equals s ||(-Delta)^(s/2) u||^2)."""
    _check_field(u)
    if not (0 < s < 1):
        raise DomainError(f"s must lie in (0, 1), got {s}")
    q = q or MQuadrature()
    g = u.grid
    rule = q.rule(*g.spectral_range, s)
    # w m^s / (k^2 + m)^2 is assembled in log space; m reaches e^600.
    lw = rule.log_weights(s)
    lm = rule.log_m
    cs2 = c_s(s) ** 2
    k2 = g.ksq.ravel()
    dens = g.parseval * k2 * np.abs(u.fft().ravel()) ** 2
    nz = dens > 0
    lk2, dens = np.log(k2[nz]), dens[nz]
    total = 0.0
    for sl in _chunks(len(lm), 32):
        kern = np.exp(lw[None, sl] - 2.0 * np.logaddexp(lk2[:, None], lm[None, sl]))
        total += float(dens @ kern.sum(axis=1))
    total *= cs2
    return total


def plancherel_weight(xi_abs: float, s: float, q: MQuadrature | None = None) -> float:
    """(sin(pi s)/pi) int m^s / (|xi|^2 + m)^2 dm, which equals s |xi|^(2s-2)."""
    if not xi_abs > 0:
        raise DomainError("plancherel_weight needs |xi| > 0")
    q = q or MQuadrature()
    x = xi_abs ** 2
    rule = q.rule(x, x, s)
    return float(math.sin(math.pi * s) / math.pi * np.sum(rule.weights(s) / (x + rule.m) ** 2))


def energy(u: FieldOnGrid, p: FracParams) -> float:
    """E[u] = 1/2 ||(-Delta)^(s/2) u||^2 - 1/(2 sigma + 2) int |u|^(2 sigma + 2)."""
    return 0.5 * frac_seminorm(u, p.s) ** 2 - u.lp_power(p.p) / p.p
