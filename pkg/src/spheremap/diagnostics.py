"""Conservation monitors, stability probes, and space-time norms on records.

All physical-space norms use the uniform-grid quadrature rule, which is
spectrally accurate for smooth periodic data; frequency-space norms share the
Plancherel normalization of :mod:`spheremap.spectral`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gauge import (
    derive_psi,
    residual_compatibility,
    residual_curvature,
    residual_psi0,
)
from .geometry import SphereField, coulomb_fix, divergence, projection_frame
from .spectral import Grid, eta0, l2_norm, sobolev_norm

__all__ = [
    "DiagnosticsRow",
    "energy",
    "l2_distance_q",
    "critical_norm",
    "frame_bound_ratio",
    "diagnostics_row",
    "GronwallResult",
    "gronwall_probe",
    "SpaceTimeRecord",
    "directional_norm",
    "xk_norm",
]


@dataclass(frozen=True)
class DiagnosticsRow:
    """One monitored time slice of a run."""

    t: float
    energy: float
    l2_dist_q: float
    critical_norm: float
    unit_violation: float
    div_a: float
    res_compatibility: float
    res_curvature: float
    res_psi0: float

    FIELDS = (
        "t",
        "energy",
        "l2_dist_q",
        "critical_norm",
        "unit_violation",
        "div_a",
        "res_compatibility",
        "res_curvature",
        "res_psi0",
    )

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in self.FIELDS)

    def __post_init__(self) -> None:
        vals = self.as_tuple()
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite diagnostics row: {vals}")


def energy(s: SphereField) -> float:
    """Dirichlet energy sum_l ||d_l s||_L2^2, evaluated by Plancherel."""
    grid = s.grid
    shat = grid.fft(s.values)
    weight = grid.k_squared
    total = np.sum(np.abs(shat) ** 2 * weight)
    return float(total * grid.length**grid.d / grid.n ** (2 * grid.d))


def l2_distance_q(s: SphereField, q: np.ndarray | None = None) -> float:
    """|| s - q ||_L2 by quadrature; conserved along the flow."""
    qv = np.asarray(q if q is not None else s.q, dtype=float)
    diff = s.values - qv.reshape((3,) + (1,) * s.grid.d)
    return l2_norm(s.grid, diff)


def critical_norm(s: SphereField, q: np.ndarray | None = None) -> float:
    """Scale-critical size || s - q ||_{H^(d/2), homogeneous}."""
    grid = s.grid
    qv = np.asarray(q if q is not None else s.q, dtype=float)
    diff = s.values - qv.reshape((3,) + (1,) * grid.d)
    return sobolev_norm(grid, diff, grid.d / 2.0, homogeneous=True)


def frame_bound_ratio(s: SphereField, qprime: np.ndarray | None = None) -> float:
    """max_m ||psi_m||_{H^((d-2)/2), hom} divided by ||s - q||_{H^(d/2), hom}.

    Returns 0 for s identically at the base point (0/0 guarded).  Stability
    of this ratio across an amplitude sweep evidences the linear bound of
    the derived fields by the critical norm of the data.
    """
    denom = critical_norm(s)
    if denom == 0.0:
        return 0.0
    frame = projection_frame(s, qprime)
    psi = derive_psi(frame)
    sigma = (s.grid.d - 2) / 2.0
    num = max(sobolev_norm(s.grid, psi[m], sigma, homogeneous=True) for m in range(s.grid.d))
    return num / denom


def diagnostics_row(
    t: float, s: SphereField, unit_violation: float, qprime: np.ndarray | None = None
) -> DiagnosticsRow:
    """Assemble the full monitored row for one time slice.

    Builds the Coulomb-fixed projection frame at this slice and evaluates the
    structural-identity residuals alongside the conserved quantities.
    """
    frame, conn, _ = coulomb_fix(projection_frame(s, qprime))
    psi = derive_psi(frame)
    div_a = l2_norm(s.grid, divergence(s.grid, conn.a))
    return DiagnosticsRow(
        t=t,
        energy=energy(s),
        l2_dist_q=l2_distance_q(s),
        critical_norm=critical_norm(s),
        unit_violation=unit_violation,
        div_a=div_a,
        res_compatibility=residual_compatibility(s.grid, psi, conn.a),
        res_curvature=residual_curvature(s.grid, psi, conn.a),
        res_psi0=residual_psi0(frame, psi, conn.a),
    )


def _h1_norm(grid: Grid, f: np.ndarray) -> float:
    return sobolev_norm(grid, f, 1.0, homogeneous=False)


@dataclass(frozen=True)
class GronwallResult:
    rate: float                 # fitted slope of log ||q(t)||_H1
    times: np.ndarray
    q_norms: np.ndarray
    identical: bool             # trajectories matched bitwise throughout


def gronwall_probe(
    s0a: SphereField, s0b: SphereField, T: float, dt: float | None = None
) -> GronwallResult:
    """Two-trajectory stability test: evolve both data and fit the growth rate.

    Runs both initial conditions with the projected RK4 step up to time |T|
    (backwards for negative T) and least-squares fits the slope of
    log ||s_b(t) - s_a(t)||_H1.  For identical inputs the trajectories stay
    bitwise identical and the rate is reported as 0.
    """
    from .evolution import default_dt, step_rk4_projected

    grid = s0a.grid
    if dt is None:
        dt = default_dt(grid)
    step = dt if T >= 0 else -dt
    nsteps = max(1, int(round(abs(T) / dt)))

    identical = np.array_equal(s0a.values, s0b.values)
    sa, sb = s0a, s0b
    times = [0.0]
    norms = [_h1_norm(grid, s0b.values - s0a.values)]
    for k in range(1, nsteps + 1):
        sa = step_rk4_projected(sa, step)
        sb = step_rk4_projected(sb, step)
        if identical and not np.array_equal(sa.values, sb.values):
            identical = False
        times.append(abs(k * step))
        norms.append(_h1_norm(grid, sb.values - sa.values))

    times_arr = np.asarray(times)
    norms_arr = np.asarray(norms)
    if identical or norms_arr[0] == 0.0:
        rate = 0.0
    else:
        rate = float(np.polyfit(times_arr, np.log(norms_arr), 1)[0])
    return GronwallResult(rate, times_arr, norms_arr, identical)


@dataclass(frozen=True)
class SpaceTimeRecord:
    """Uniformly sampled scalar observable u(t, x) on a fixed grid."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray   # (nt, n, ..., n), real or complex

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if values.shape != (len(times),) + self.grid.shape:
            raise ValueError("record values shape does not match times x grid")
        if len(times) >= 2:
            dts = np.diff(times)
            if np.any(dts <= 0) or not np.allclose(dts, dts[0], rtol=1e-8, atol=1e-12):
                raise ValueError("record times must be uniform and increasing")

    @property
    def dt(self) -> float:
        if len(self.times) < 2:
            raise ValueError("record has fewer than two samples")
        return float(self.times[1] - self.times[0])


def directional_norm(rec: SpaceTimeRecord, e: int, p, q) -> float:
    """Mixed norm ||u||: outer p-norm along the signed coordinate axis e,
    inner q-norm over the transverse hyperplane and recorded time.

    ``e`` is a signed 1-based axis index (+-1 ... +-d); only coordinate axes
    are supported, so no hyperplane resampling is needed.  p and q may be
    positive numbers or the string/float infinity.
    """
    grid = rec.grid
    axis = abs(int(e))
    if not 1 <= axis <= grid.d or e == 0:
        raise ValueError(f"direction {e} is not a signed coordinate axis of a {grid.d}-d grid")
    p_inf = p in ("inf", np.inf)
    q_inf = q in ("inf", np.inf)

    # move the e-axis to the front: values axis = 1 + (axis-1)
    u = np.moveaxis(rec.values, axis, 0)     # (n, nt, transverse...)
    mags = np.abs(u)
    trans_weight = grid.spacing ** (grid.d - 1) * (rec.dt if len(rec.times) > 1 else 1.0)
    inner_axes = tuple(range(1, mags.ndim))
    if q_inf:
        inner = np.max(mags, axis=inner_axes)
    else:
        inner = (np.sum(mags**q, axis=inner_axes) * trans_weight) ** (1.0 / q)
    if p_inf:
        return float(np.max(inner))
    return float((np.sum(inner**p) * grid.spacing) ** (1.0 / p))


def xk_norm(rec: SpaceTimeRecord, k: int) -> float:
    """Dyadic-frequency, modulation-weighted space-time norm.

    Hann-tapers the record in time, takes the space-time DFT, restricts to
    the spatial annulus |xi| in [2^(k-1), 2^(k+1)], and sums the 2^(j/2)
    weighted L2 masses of the modulation shells |tau + |xi|^2| ~ 2^j.

    Raises when the record is too short to resolve the requested modulation
    shells (the temporal Nyquist frequency must reach |xi|^2 on the annulus).
    """
    grid = rec.grid
    nt = len(rec.times)
    if nt < 8:
        raise ValueError("record too short for modulation analysis (need >= 8 samples)")
    dt = rec.dt

    radius = grid.k_abs
    annulus = (radius >= 2.0 ** (k - 1)) & (radius <= 2.0 ** (k + 1))
    if not np.any(annulus):
        return 0.0
    xi_sq_max = float(np.max(grid.k_squared[annulus]))
    tau_nyquist = np.pi / dt
    if tau_nyquist < xi_sq_max:
        raise ValueError(
            f"record too short for the requested modulation resolution: temporal Nyquist "
            f"{tau_nyquist:.3g} below max |xi|^2 = {xi_sq_max:.3g} on the annulus"
        )

    taper = np.hanning(nt).reshape((nt,) + (1,) * grid.d)
    fhat = np.fft.fftn(rec.values * taper)
    tau = 2.0 * np.pi * np.fft.fftfreq(nt, d=dt).reshape((nt,) + (1,) * grid.d)
    mu = tau + grid.k_squared[np.newaxis]

    weight = (grid.length**grid.d / grid.n ** (2 * grid.d)) * (nt * dt / nt**2)
    power = np.abs(fhat) ** 2 * annulus[np.newaxis]

    mu_max = float(np.max(np.abs(mu)))
    jmax = max(1, int(np.ceil(np.log2(max(mu_max, 1.0)))) + 1)
    total = 0.0
    for j in range(jmax + 1):
        if j == 0:
            shell = eta0(mu)
        else:
            shell = eta0(mu / 2.0**j) - eta0(mu / 2.0 ** (j - 1))
        mass = np.sqrt(np.sum(shell**2 * power) * weight)
        total += 2.0 ** (j / 2.0) * mass
    return float(total)
