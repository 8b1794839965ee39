"""Discrete Fourier analysis on the periodic torus [0, L)^d.

All operators act on uniformly sampled fields via the FFT, so derivatives,
Riesz-type multipliers and Littlewood-Paley projections are exact on the
resolved frequency lattice.  Conventions:

* The dual lattice is xi in (2*pi/L) * {-n/2, ..., n/2 - 1}^d.
* Fourier coefficients are normalized so that Plancherel holds against the
  continuum L2 integral over the torus:
  integral |f|^2 dx = (L^d / n^(2d)) * sum_xi |F(f)(xi)|^2.
* Homogeneous multipliers (i*xi_l/|xi|, |xi|^sigma with sigma<0,
  i*xi_l/|xi|^2) are set to 0 on the xi = 0 mode.  Downstream formulas only
  apply them behind a Riesz factor that kills the mean, so the choice is
  consistent with the whole-space operators they discretize.
* Quadratic and cubic products of fields are stabilized by the 2/3-rule
  (``dealias`` / ``dealiased_product``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "partial_derivative",
    "laplacian",
    "fourier_multiplier",
    "riesz",
    "inv_gradient_riesz",
    "fractional_laplacian",
    "eta0",
    "lp_weight",
    "lp_projector",
    "lp_k_range",
    "sobolev_norm",
    "l2_norm",
    "mean_value",
    "vector_apply",
    "dealias",
    "dealiased_product",
]

# Plateau and support radii of the smooth radial cutoff eta0.
_ETA0_PLATEAU = 5.0 / 4.0
_ETA0_SUPPORT = 8.0 / 5.0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on [0, L)^d with its dual frequency lattice.

    Parameters
    ----------
    d : spatial dimension, 2 <= d <= 4
    n : points per axis, even and >= 8
    length : period L of every axis
    """

    d: int
    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self) -> None:
        if not 2 <= self.d <= 4:
            raise ValueError(f"dimension d={self.d} outside supported range [2, 4]")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n={self.n} must be even and >= 8")
        if not np.isfinite(self.length) or self.length <= 0:
            raise ValueError(f"period length={self.length} must be positive")

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @cached_property
    def _freq_1d(self) -> np.ndarray:
        # 2*pi/L * {0, 1, ..., n/2-1, -n/2, ..., -1} in FFT ordering
        return (2.0 * np.pi / self.length) * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def _freq_1d_odd(self) -> np.ndarray:
        # Derivative frequencies: the unpaired Nyquist mode is zeroed, since
        # odd-order derivatives of real data are not representable there.
        out = self._freq_1d.copy()
        out[self.n // 2] = 0.0
        return out

    def freq(self, axis: int) -> np.ndarray:
        """Frequency values along one axis (1-based), broadcastable to shape."""
        self._check_axis(axis)
        shape = [1] * self.d
        shape[axis - 1] = self.n
        return self._freq_1d.reshape(shape)

    def freq_d(self, axis: int) -> np.ndarray:
        """Odd-derivative frequencies along one axis (Nyquist zeroed)."""
        self._check_axis(axis)
        shape = [1] * self.d
        shape[axis - 1] = self.n
        return self._freq_1d_odd.reshape(shape)

    @cached_property
    def k_squared(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for m in range(1, self.d + 1):
            out = out + self.freq(m) ** 2
        return out

    @cached_property
    def k_squared_d(self) -> np.ndarray:
        """|xi|^2 built from derivative frequencies; used by the gauge solve
        so that div(a + grad chi) cancels to multiplier exactness."""
        out = np.zeros(self.shape)
        for m in range(1, self.d + 1):
            out = out + self.freq_d(m) ** 2
        return out

    @cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @property
    def k_max(self) -> float:
        """Largest |xi| on the lattice (corner mode)."""
        return (2.0 * np.pi / self.length) * (self.n / 2) * np.sqrt(self.d)

    def coordinate(self, axis: int) -> np.ndarray:
        """Sample coordinates along one axis (1-based), broadcastable."""
        self._check_axis(axis)
        shape = [1] * self.d
        shape[axis - 1] = self.n
        x = self.spacing * np.arange(self.n)
        return x.reshape(shape)

    def meshgrid(self) -> list:
        return [np.broadcast_to(self.coordinate(m), self.shape) for m in range(1, self.d + 1)]

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep integer modes with |m| < n/3 on every axis."""
        keep_1d = np.abs(np.fft.fftfreq(self.n, d=1.0 / self.n)) < self.n / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for m in range(self.d):
            shape = [1] * self.d
            shape[m] = self.n
            mask &= keep_1d.reshape(shape)
        return mask

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.fftn(f, axes=tuple(range(-self.d, 0)))

    def ifft(self, fhat: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(fhat, axes=tuple(range(-self.d, 0)))

    def _check_axis(self, axis: int) -> None:
        if not 1 <= axis <= self.d:
            raise ValueError(f"axis {axis} outside 1..{self.d}")

    def _check_field(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-self.d:] != self.shape:
            raise ValueError(f"field shape {f.shape} does not end with grid shape {self.shape}")
        return f


def fourier_multiplier(grid: Grid, f: np.ndarray, symbol: Callable) -> np.ndarray:
    """Apply a Fourier multiplier F(out)(xi) = m(xi) * F(f)(xi).

    ``symbol`` receives the tuple of broadcastable frequency arrays
    (xi_1, ..., xi_d) and must return a finite array on the dual lattice;
    the value it assigns at xi = 0 is kept verbatim.
    """
    f = grid._check_field(f)
    xi = tuple(grid.freq(m) for m in range(1, grid.d + 1))
    m = np.asarray(symbol(xi))
    m = np.broadcast_to(m, grid.shape)
    if not np.all(np.isfinite(m)):
        raise ValueError("multiplier symbol returned non-finite values on the lattice")
    return grid.ifft(m * grid.fft(f))


def partial_derivative(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """Spectral derivative along ``axis`` (1-based): multiplier i*xi_axis."""
    grid._check_axis(axis)
    return grid.ifft(1j * grid.freq_d(axis) * grid.fft(f))


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Spectral Laplacian: multiplier -|xi|^2."""
    return grid.ifft(-grid.k_squared * grid.fft(f))


def _safe_inverse(weight: np.ndarray) -> np.ndarray:
    """1/weight with the zero-frequency entry replaced by 0."""
    out = np.zeros_like(weight)
    np.divide(1.0, weight, out=out, where=weight != 0)
    return out


def riesz(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """Riesz transform R_axis: multiplier i*xi_axis/|xi|, 0 at xi = 0."""
    grid._check_axis(axis)
    m = 1j * grid.freq_d(axis) * _safe_inverse(grid.k_abs)
    return grid.ifft(m * grid.fft(f))


def inv_gradient_riesz(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """Combined |nabla|^-1 R_axis multiplier i*xi_axis/|xi|^2, 0 at xi = 0."""
    grid._check_axis(axis)
    m = 1j * grid.freq_d(axis) * _safe_inverse(grid.k_squared)
    return grid.ifft(m * grid.fft(f))


def fractional_laplacian(grid: Grid, f: np.ndarray, order: float) -> np.ndarray:
    """Apply (-Laplacian)^(order/2), i.e. the multiplier |xi|^order.

    The xi = 0 mode is zeroed for every order (it is already zero when
    order > 0; for order <= 0 this is the mean-free inverse).
    """
    k = grid.k_abs
    m = np.zeros(grid.shape)
    np.power(k, order, out=m, where=k != 0)
    return grid.ifft(m * grid.fft(f))


def eta0(mu) -> np.ndarray:
    """Smooth even radial cutoff: 1 on |mu| <= 5/4, 0 on |mu| >= 8/5.

    Between the plateau and the support edge the profile is the smooth step
    exp(1 - 1/(1 - t^2)) with t = (|mu| - 5/4) / (8/5 - 5/4).
    """
    mu = np.abs(np.asarray(mu, dtype=float))
    out = np.zeros_like(mu)
    out[mu <= _ETA0_PLATEAU] = 1.0
    ramp = (mu > _ETA0_PLATEAU) & (mu < _ETA0_SUPPORT)
    t = (mu[ramp] - _ETA0_PLATEAU) / (_ETA0_SUPPORT - _ETA0_PLATEAU)
    out[ramp] = np.exp(1.0 - 1.0 / (1.0 - t**2))
    return out


def lp_weight(k: int, radius) -> np.ndarray:
    """Dyadic annulus weight eta_k(|xi|) = eta0(|xi|/2^k) - eta0(|xi|/2^(k-1))."""
    radius = np.asarray(radius, dtype=float)
    return eta0(radius / 2.0**k) - eta0(radius / 2.0 ** (k - 1))


def lp_projector(grid: Grid, f: np.ndarray, k: int) -> np.ndarray:
    """Littlewood-Paley projection P_k onto frequencies |xi| ~ 2^k."""
    return grid.ifft(lp_weight(k, grid.k_abs) * grid.fft(f))


def lp_k_range(grid: Grid) -> range:
    """Range of dyadic indices k whose annuli touch the nonzero lattice.

    Summing P_k over this range reproduces f minus its mean on any field.
    """
    k_min_abs = 2.0 * np.pi / grid.length
    lo = int(np.floor(np.log2(k_min_abs / _ETA0_SUPPORT)))
    hi = int(np.ceil(np.log2(grid.k_max / _ETA0_PLATEAU))) + 1
    return range(lo, hi + 1)


def sobolev_norm(grid: Grid, f: np.ndarray, sigma: float, homogeneous: bool = False) -> float:
    """Sobolev norm of a (possibly multi-component) field via Plancherel.

    ``homogeneous`` weights by |xi|^sigma and ignores the xi = 0 mode;
    otherwise the weight is (1 + |xi|^2)^(sigma/2).  Components (leading
    axes) are combined as a root sum of squares.  sigma is restricted to
    [-1, d + 10].
    """
    if not -1.0 <= sigma <= grid.d + 10:
        raise ValueError(f"sigma={sigma} outside supported range [-1, {grid.d + 10}]")
    f = grid._check_field(f)
    fhat = grid.fft(f)
    power = np.abs(fhat) ** 2
    if homogeneous:
        weight = np.zeros(grid.shape)
        np.power(grid.k_abs, 2.0 * sigma, out=weight, where=grid.k_abs != 0)
    else:
        weight = (1.0 + grid.k_squared) ** sigma
    total = np.sum(power * weight)
    return float(np.sqrt(total * grid.length**grid.d / grid.n ** (2 * grid.d)))


def l2_norm(grid: Grid, f: np.ndarray) -> float:
    """L2 norm by the uniform-grid quadrature rule (spectrally accurate)."""
    f = grid._check_field(f)
    return float(np.sqrt(np.sum(np.abs(f) ** 2) * grid.cell_volume))


def mean_value(grid: Grid, f: np.ndarray):
    """Spatial mean over the torus (per leading component)."""
    f = grid._check_field(f)
    return f.mean(axis=tuple(range(-grid.d, 0)))


def vector_apply(op: Callable, field: np.ndarray, *args, **kwargs) -> np.ndarray:
    """Lift a scalar-field operation to each leading component of ``field``."""
    return np.stack([op(component, *args, **kwargs) for component in field])


def dealias(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Truncate the top third of frequencies (2/3 rule) on every axis."""
    f = grid._check_field(f)
    out = grid.ifft(grid.dealias_mask * grid.fft(f))
    if np.isrealobj(f):
        out = out.real
    return out


def dealiased_product(grid: Grid, *factors: np.ndarray) -> np.ndarray:
    """Pointwise product of fields with 2/3-rule truncation.

    Every factor is truncated before multiplying and each intermediate
    product is truncated again, so quadratic and cubic products are free of
    aliasing on the retained modes.
    """
    if len(factors) < 2:
        raise ValueError("need at least two factors")
    out = dealias(grid, factors[0])
    for g in factors[1:]:
        out = dealias(grid, out * dealias(grid, g))
    return out
