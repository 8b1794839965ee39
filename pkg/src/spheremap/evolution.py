"""Time integration of the sphere flow d_t s = s x Laplacian(s).

Two integrators are provided:

* ``step_rk4_projected``: classical RK4 on the sphere flow followed by a
  pointwise renormalization back to the unit sphere.  The default time step
  2 / |xi_max|^2 sits inside RK4's imaginary-axis stability interval
  (about 2.83) for the spectral Laplacian's eigenvalues -|xi|^2.
* ``evolve_msm``: one integrating-factor RK4 step of the derived-field
  system (i d_t + Laplacian) psi_m = N_m(Psi); the linear phase
  exp(-i dt |xi|^2) is applied exactly, RK4 handles the nonlinearity.

``run`` is the batch driver: it builds the initial data, steps the flow,
records diagnostics rows at a fixed cadence, and optionally co-evolves the
derived fields to track the mismatch between the two formulations (the
constant per-slice phase freedom is aligned on the largest Fourier mode of
psi_1 before differencing).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DiagnosticsRow, diagnostics_row
from .gauge import derive_psi, msm_nonlinearity
from .geometry import (
    BlowupSuspectedError,
    SphereField,
    coulomb_fix,
    projection_frame,
    renormalize,
    _cross,
)
from .initial_data import InitialDataSpec, generate_initial, tilted_qprime
from .spectral import Grid, l2_norm, laplacian, vector_apply

__all__ = [
    "RK4_IMAG_STABILITY",
    "default_dt",
    "sm_rhs",
    "rk4_update",
    "step_rk4_projected",
    "free_propagator",
    "evolve_msm",
    "align_phase",
    "SimConfig",
    "TrajectoryRecord",
    "run",
]

RK4_IMAG_STABILITY = 2.8  # conservative bound for |dt * xi_max^2|

INTEGRATORS = ("rk4-projected", "strang-msm")


def default_dt(grid: Grid) -> float:
    """Largest routinely stable step, 2 / |xi_max|^2."""
    return 2.0 / grid.k_max**2


def sm_rhs(s: SphereField) -> np.ndarray:
    """Flow velocity s x Laplacian(s); pointwise orthogonal to s."""
    return _sm_rhs_raw(s.grid, s.values)


def _sm_rhs_raw(grid: Grid, values: np.ndarray) -> np.ndarray:
    lap = vector_apply(lambda c: laplacian(grid, c), values).real
    return _cross(values, lap)


def rk4_update(s: SphereField, dt: float) -> np.ndarray:
    """One classical RK4 step of the flow, before renormalization."""
    grid = s.grid
    y = s.values
    k1 = _sm_rhs_raw(grid, y)
    k2 = _sm_rhs_raw(grid, y + 0.5 * dt * k1)
    k3 = _sm_rhs_raw(grid, y + 0.5 * dt * k2)
    k4 = _sm_rhs_raw(grid, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rk4_projected(s: SphereField, dt: float) -> SphereField:
    """RK4 step followed by pointwise projection back to the sphere."""
    return renormalize(s.grid, rk4_update(s, dt), q=s.q)


def free_propagator(grid: Grid, psi: np.ndarray, dt: float) -> np.ndarray:
    """Exact linear phase: multiply each mode by exp(-i dt |xi|^2)."""
    phase = np.exp(-1j * dt * grid.k_squared)
    return grid.ifft(phase * grid.fft(psi))


def evolve_msm(grid: Grid, psi: np.ndarray, dt: float, nonlinear: bool = True) -> np.ndarray:
    """One integrating-factor RK4 step of the derived-field system.

    With the nonlinearity frozen (``nonlinear=False``) the step reduces to
    the exact free propagator.
    """
    psi_hat = grid.fft(psi)
    half = np.exp(-1j * (dt / 2.0) * grid.k_squared)
    full = half * half
    if not nonlinear:
        return grid.ifft(full * psi_hat)

    def nhat(ph):
        # Fourier transform of -i N(Psi) evaluated from Fourier data
        return grid.fft(-1j * msm_nonlinearity(grid, grid.ifft(ph)))

    a = nhat(psi_hat)
    b = nhat(half * (psi_hat + 0.5 * dt * a))
    c = nhat(half * psi_hat + 0.5 * dt * b)
    d = nhat(full * psi_hat + dt * half * c)
    out_hat = full * psi_hat + (dt / 6.0) * (full * a + 2.0 * half * (b + c) + d)
    return grid.ifft(out_hat)


def align_phase(grid: Grid, psi: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rotate psi by the constant phase matching its psi_1 to the reference.

    The phase is read off the largest-magnitude Fourier mode of the
    reference's first component, which removes the per-slice constant
    rotation freedom of the gauge before trajectories are compared.
    """
    ref_hat = grid.fft(reference[0])
    idx = np.unravel_index(int(np.argmax(np.abs(ref_hat))), ref_hat.shape)
    cand_hat = grid.fft(psi[0])
    if abs(cand_hat[idx]) == 0.0 or abs(ref_hat[idx]) == 0.0:
        return psi
    phase = ref_hat[idx] / cand_hat[idx]
    phase /= abs(phase)
    return psi * phase


def _relative_psi_mismatch(grid: Grid, psi: np.ndarray, reference: np.ndarray) -> float:
    aligned = align_phase(grid, psi, reference)
    num = np.sqrt(sum(l2_norm(grid, aligned[m] - reference[m]) ** 2 for m in range(grid.d)))
    den = np.sqrt(sum(l2_norm(grid, reference[m]) ** 2 for m in range(grid.d)))
    return float(num / den) if den > 0 else float(num)


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one deterministic batch run."""

    grid: Grid
    initial: InitialDataSpec = field(default_factory=InitialDataSpec)
    dt: float | None = None            # None -> default_dt(grid)
    steps: int = 0
    integrator: str = "rk4-projected"
    cadence: int = 1                   # diagnostics every this many steps
    snapshot_every: int = 0            # 0 -> initial and final snapshot only
    qprime: tuple | None = None        # frame direction for diagnostics
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}; choose from {INTEGRATORS}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        if self.resolved_dt() * self.grid.k_max**2 > RK4_IMAG_STABILITY + 1e-12:
            raise ValueError(
                f"dt = {self.resolved_dt():.3e} violates the stability bound "
                f"dt * |xi_max|^2 <= {RK4_IMAG_STABILITY}"
            )

    def resolved_dt(self) -> float:
        return self.dt if self.dt is not None else default_dt(self.grid)

    def resolved_qprime(self) -> np.ndarray:
        if self.qprime is not None:
            return np.asarray(self.qprime, dtype=float)
        return tilted_qprime(self.initial)


@dataclass
class TrajectoryRecord:
    """Snapshots, diagnostics rows, and optional derived-field mismatch series."""

    times: list
    snapshots: list            # (step, SphereField) pairs, subsampled
    rows: list                 # DiagnosticsRow per recorded time
    aborted: bool = False
    abort_reason: str | None = None
    msm_mismatch: list | None = None   # aligned relative L2 difference per row


def run(config: SimConfig) -> TrajectoryRecord:
    """Execute one run and persist outputs if an output directory is set.

    Deterministic: identical configs produce identical records and
    byte-identical output files.  On a suspected blowup the partial record
    is persisted and returned with ``aborted=True``.
    """
    grid = config.grid
    dt = config.resolved_dt()
    qp = config.resolved_qprime()
    s = generate_initial(config.initial, grid)

    dual_track = config.integrator == "strang-msm"
    psi = None
    if dual_track:
        frame0, _, _ = coulomb_fix(projection_frame(s, qp))
        psi = derive_psi(frame0)

    record = TrajectoryRecord(
        times=[0.0],
        snapshots=[(0, s)],
        rows=[diagnostics_row(0.0, s, 0.0, qp)],
        msm_mismatch=[0.0] if dual_track else None,
    )

    last_step = 0
    for k in range(1, config.steps + 1):
        try:
            raw = rk4_update(s, dt)
            violation = float(np.max(np.abs(np.sqrt(np.sum(raw * raw, axis=0)) - 1.0)))
            s = renormalize(grid, raw, q=s.q)
        except BlowupSuspectedError as exc:
            record.aborted = True
            record.abort_reason = str(exc)
            break
        last_step = k
        if dual_track:
            psi = evolve_msm(grid, psi, dt)

        if k % config.cadence == 0 or k == config.steps:
            t = k * dt
            record.times.append(t)
            record.rows.append(diagnostics_row(t, s, violation, qp))
            if dual_track:
                frame_t, _, _ = coulomb_fix(projection_frame(s, qp))
                record.msm_mismatch.append(
                    _relative_psi_mismatch(grid, psi, derive_psi(frame_t))
                )
        if config.snapshot_every and k % config.snapshot_every == 0:
            record.snapshots.append((k, s))

    if record.snapshots[-1][1] is not s:
        record.snapshots.append((last_step, s))

    if config.out_dir is not None:
        _persist(config, record)
    return record


def _persist(config: SimConfig, record: TrajectoryRecord) -> None:
    # imported here: cli_io sits above this module in the dependency order
    from .cli_io import emit_diagnostics_csv, emit_series_csv, save_snapshot

    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    emit_diagnostics_csv(record.rows, os.path.join(out, "diagnostics.csv"))
    for step, snap in record.snapshots:
        save_snapshot(
            snap.values, snap.grid, step * config.resolved_dt(),
            os.path.join(out, f"snapshot_{step:08d}.bin"),
        )
    if record.msm_mismatch is not None:
        emit_series_csv(
            ["t", "msm_rel_mismatch"],
            list(zip([r.t for r in record.rows], record.msm_mismatch)),
            os.path.join(out, "msm_mismatch.csv"),
        )
