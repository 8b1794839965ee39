"""Sphere-valued fields, orthonormal frames and Coulomb gauge fixing.

A frame is a triple (s, v, w) of mutually orthonormal R^3 fields with
w = s x v, so (v, w) spans the tangent plane of the sphere at s.  Frames are
built either by projecting a fixed reference direction onto the tangent
plane (``projection_frame``, always periodic) or by an axis-by-axis sweep
(``sweep_frame``).  ``coulomb_fix`` rotates a frame so that the connection
coefficients a_m = (d_m v) . w become divergence free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import Grid, partial_derivative, vector_apply

__all__ = [
    "FrameDegenerateError",
    "BlowupSuspectedError",
    "SphereField",
    "Frame",
    "Connection",
    "SweepFrameResult",
    "project_n",
    "default_qprime",
    "projection_frame",
    "sweep_frame",
    "connection_of",
    "divergence",
    "coulomb_fix",
    "rotate_frame",
    "renormalize",
]

# Admissibility thresholds for the tangent projection and the axis sweep.
PROJECTION_DOT_MAX = 2.0**-5
SWEEP_OSCILLATION_MAX = 2.0**-10
SEAM_WARN_THRESHOLD = 1e-6

_UNIT_TOL = 1e-10
_FRAME_TOL = 1e-8


class FrameDegenerateError(ValueError):
    """Tangent-projection input left the admissible region."""


class BlowupSuspectedError(RuntimeError):
    """Field length left [1/2, 2]; the time step likely went unstable."""


def _norms(u: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(u * u, axis=0))


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.sum(u * v, axis=0)


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.cross(u, v, axisa=0, axisb=0, axis=0)


def _worst_point(values: np.ndarray) -> tuple:
    if not values.shape:
        return ()
    idx = np.unravel_index(int(np.argmax(values)), values.shape)
    return tuple(int(i) for i in idx)


@dataclass(frozen=True)
class SphereField:
    """Unit-length R^3-valued field with its base point q on the sphere.

    values has shape (3, n, ..., n); |values| = 1 pointwise within 1e-10.
    """

    grid: Grid
    values: np.ndarray
    q: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "q", q)
        if values.shape != (3,) + self.grid.shape:
            raise ValueError(f"values shape {values.shape} != (3,)+{self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("sphere field contains non-finite values")
        err = float(np.max(np.abs(_norms(values) - 1.0)))
        if err > _UNIT_TOL:
            raise ValueError(f"unit-length violation {err:.3e} exceeds {_UNIT_TOL:.0e}")
        if abs(np.linalg.norm(q) - 1.0) > _UNIT_TOL:
            raise ValueError("base point q is not a unit vector")

    def unit_violation(self) -> float:
        return float(np.max(np.abs(_norms(self.values) - 1.0)))


@dataclass(frozen=True)
class Frame:
    """Orthonormal triple (s, v, w) with w = s x v pointwise (within 1e-8)."""

    s: SphereField
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.v, dtype=float)
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        err = self.max_defect()
        if err > _FRAME_TOL:
            raise ValueError(f"frame orthonormality defect {err:.3e} exceeds {_FRAME_TOL:.0e}")

    def max_defect(self) -> float:
        """Largest pointwise violation among the orthonormality relations."""
        s = self.s.values
        checks = [
            np.abs(_dot(s, self.v)),
            np.abs(_dot(s, self.w)),
            np.abs(_dot(self.v, self.w)),
            np.abs(_norms(self.v) - 1.0),
            np.abs(_norms(self.w) - 1.0),
            _norms(self.w - _cross(s, self.v)),
        ]
        return float(max(np.max(c) for c in checks))

    @property
    def grid(self) -> Grid:
        return self.s.grid


@dataclass(frozen=True)
class Connection:
    """Real connection coefficients a_m = (d_m v) . w, shape (d, n, ..., n)."""

    grid: Grid
    a: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "a", a)
        if a.shape != (self.grid.d,) + self.grid.shape:
            raise ValueError(f"connection shape {a.shape} != ({self.grid.d},)+{self.grid.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("connection contains non-finite values")


def project_n(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to u2 in span{u1, u2}.

    Computes (u1 - ((u1.u2)/|u2|^2) u2) / |...| with the admissibility
    preconditions |u1|, |u2| in (1/2, 2) and |u1.u2| < 2^-5.  Accepts single
    vectors of shape (3,) or fields of shape (3, ...); preconditions are
    enforced pointwise.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    u1, u2 = np.broadcast_arrays(u1, u2)
    n1, n2 = _norms(u1), _norms(u2)
    dots = _dot(u1, u2)
    bad_len = (n1 <= 0.5) | (n1 >= 2.0) | (n2 <= 0.5) | (n2 >= 2.0)
    if np.any(bad_len):
        idx = _worst_point(np.where(bad_len, np.maximum(np.abs(n1 - 1), np.abs(n2 - 1)), 0.0))
        raise FrameDegenerateError(f"input length outside (1/2, 2) at grid point {idx}")
    dot_abs = np.abs(dots)
    if np.any(dot_abs >= PROJECTION_DOT_MAX):
        idx = _worst_point(dot_abs)
        raise FrameDegenerateError(
            f"|u1.u2| = {float(np.max(dot_abs)):.5f} >= 2^-5 at grid point {idx}"
        )
    proj = u1 - (dots / n2**2) * u2
    return proj / _norms(proj)


def default_qprime(q: np.ndarray) -> np.ndarray:
    """Deterministic unit reference direction orthogonal to q.

    Takes the first standard basis vector that is not (nearly) parallel to q
    and Gram-Schmidts it against q.
    """
    q = np.asarray(q, dtype=float)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        if abs(float(e @ q)) < 0.9:
            qp = e - (e @ q) * q
            return qp / np.linalg.norm(qp)
    raise ValueError("no standard basis vector transverse to q")  # unreachable for unit q


def projection_frame(s: SphereField, qprime: np.ndarray | None = None) -> Frame:
    """Frame with v = N[qprime, s] pointwise and w = s x v.

    Valid whenever |s(x) . qprime| < 2^-5 everywhere, which holds for small
    perturbations of the base point when qprime is orthogonal to it.  The
    result is exactly periodic by construction.
    """
    if qprime is None:
        qprime = default_qprime(s.q)
    qprime = np.asarray(qprime, dtype=float)
    qp_field = np.broadcast_to(qprime.reshape((3,) + (1,) * s.grid.d), s.values.shape)
    v = project_n(qp_field, s.values)
    w = _cross(s.values, v)
    return Frame(s, v, np.ascontiguousarray(w))


@dataclass(frozen=True)
class SweepFrameResult:
    frame: Frame
    seam_mismatch: float
    seam_warning: bool


def sweep_frame(s: SphereField, seed_direction: np.ndarray | None = None) -> SweepFrameResult:
    """Build a tangent frame by inductive axis-by-axis extension.

    Starting from one tangent vector at the origin, v is transported along
    axis 1, then across each further axis hyperplane by hyperplane, each step
    projecting the previous tangent vector onto the new tangent plane.
    Requires the per-cell oscillation max |s(x) - s(y)| <= 2^-10 for adjacent
    grid points.  The torus wrap-around seam is not used in the construction;
    the maximal mismatch across all seams is reported, with a warning flag
    when it exceeds 1e-6.
    """
    grid = s.grid
    svals = s.values
    for axis in range(1, grid.d + 1):
        osc = float(np.max(_norms(svals - np.roll(svals, -1, axis=axis))))
        if osc > SWEEP_OSCILLATION_MAX:
            raise ValueError(
                f"oscillation {osc:.3e} per cell along axis {axis} exceeds 2^-10; "
                "refine the grid"
            )

    if seed_direction is None:
        origin = tuple([0] * grid.d)
        seed_direction = default_qprime(svals[(slice(None),) + origin])
    v = np.zeros_like(svals)
    origin = (slice(None),) + tuple([0] * grid.d)
    v[origin] = project_n(np.asarray(seed_direction, dtype=float), svals[origin])

    # Transport along axis 1 on the line x_2 = ... = x_d = 0, then sweep each
    # further axis, extending whole (filled) slabs one layer at a time.
    for axis in range(1, grid.d + 1):
        filled = (slice(None),) + tuple([slice(None)] * (axis - 1) + [0] * (grid.d - axis + 1))
        prev = v[filled]
        for i in range(1, grid.n):
            here = (slice(None),) + tuple(
                [slice(None)] * (axis - 1) + [i] + [0] * (grid.d - axis)
            )
            prev = project_n(prev, svals[here])
            v[here] = prev

    seam = 0.0
    for axis in range(1, grid.d + 1):
        last = (slice(None),) + tuple(
            [slice(None)] * (axis - 1) + [grid.n - 1] + [slice(None)] * (grid.d - axis)
        )
        first = (slice(None),) + tuple(
            [slice(None)] * (axis - 1) + [0] + [slice(None)] * (grid.d - axis)
        )
        wrapped = project_n(v[last], svals[first])
        seam = max(seam, float(np.max(_norms(wrapped - v[first]))))

    w = _cross(svals, v)
    frame = Frame(s, v, np.ascontiguousarray(w))
    return SweepFrameResult(frame, seam, seam > SEAM_WARN_THRESHOLD)


def connection_of(frame: Frame) -> Connection:
    """Connection coefficients a_m = (d_m v) . w, computed spectrally.

    The result is real; the O(1e-16) imaginary FFT residue is discarded.
    """
    grid = frame.grid
    a = np.empty((grid.d,) + grid.shape)
    for m in range(1, grid.d + 1):
        dv = vector_apply(lambda c: partial_derivative(grid, c, m), frame.v)
        a[m - 1] = np.sum(dv * frame.w, axis=0).real
    return Connection(grid, a)


def divergence(grid: Grid, a: np.ndarray) -> np.ndarray:
    """sum_m d_m a_m of a d-component field, computed spectrally."""
    out = np.zeros(grid.shape, dtype=complex)
    for m in range(1, grid.d + 1):
        out += partial_derivative(grid, a[m - 1], m)
    return out.real if np.isrealobj(a) else out


def _poisson_zero_mean(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Solve Laplacian(u) = rhs with zero-mean u (zero mode dropped).

    Uses the derivative-frequency Laplacian so that div(grad u) computed by
    composed spectral derivatives reproduces rhs exactly.
    """
    rhat = grid.fft(rhs)
    denom = -grid.k_squared_d
    uhat = np.zeros_like(rhat)
    np.divide(rhat, denom, out=uhat, where=denom != 0)
    return grid.ifft(uhat).real


def rotate_frame(frame: Frame, chi: np.ndarray) -> Frame:
    """Rotate the tangent pair by the angle field chi:
    v' = cos(chi) v + sin(chi) w,  w' = -sin(chi) v + cos(chi) w.
    """
    c, sn = np.cos(chi), np.sin(chi)
    v = c * frame.v + sn * frame.w
    w = -sn * frame.v + c * frame.w
    return Frame(frame.s, v, w)


def coulomb_fix(frame: Frame) -> tuple:
    """Rotate a frame into the Coulomb gauge sum_m d_m a_m = 0.

    Solves Laplacian(chi) = -div a for the zero-mean rotation angle chi and
    returns (rotated frame, fixed connection, chi).  The connection is
    updated by the gauge-covariance rule a'_m = a_m + d_m chi, which is
    divergence free to multiplier exactness; recomputing it from the rotated
    frame with ``connection_of`` agrees up to spectral truncation.  The
    zero-mean normalization fixes the otherwise free constant rotation per
    time slice.
    """
    grid = frame.grid
    a = connection_of(frame)
    chi = _poisson_zero_mean(grid, -divergence(grid, a.a))
    fixed = rotate_frame(frame, chi)
    aprime = np.stack(
        [a.a[m - 1] + partial_derivative(grid, chi, m).real for m in range(1, grid.d + 1)]
    )
    return fixed, Connection(grid, aprime), chi


def renormalize(grid: Grid, u: np.ndarray, q: np.ndarray | None = None) -> SphereField:
    """Project an R^3 field back to the unit sphere pointwise.

    Raises BlowupSuspectedError when any pointwise length leaves [1/2, 2].
    """
    u = np.asarray(u, dtype=float)
    lengths = _norms(u)
    if not np.all(np.isfinite(u)) or np.any(lengths < 0.5) or np.any(lengths > 2.0):
        bad = np.where(np.isfinite(lengths), np.abs(lengths - 1.0), np.inf)
        idx = _worst_point(bad)
        raise BlowupSuspectedError(
            f"field length left [1/2, 2] at grid point {idx} "
            f"(|u| = {float(lengths[idx]) if np.all(np.isfinite(lengths)) else float('nan'):.4f})"
        )
    kwargs = {} if q is None else {"q": np.asarray(q, dtype=float)}
    return SphereField(grid, u / lengths, **kwargs)
