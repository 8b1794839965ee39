"""Tests for conservation monitors, stability probes and space-time norms."""

import numpy as np
import pytest

from spheremap.diagnostics import (
    DiagnosticsRow,
    SpaceTimeRecord,
    critical_norm,
    diagnostics_row,
    directional_norm,
    energy,
    frame_bound_ratio,
    gronwall_probe,
    l2_distance_q,
    xk_norm,
)
from spheremap.evolution import default_dt
from spheremap.gauge import derive_psi
from spheremap.geometry import SphereField, projection_frame, renormalize
from spheremap.initial_data import InitialDataSpec, generate_initial, tilted_qprime
from spheremap.spectral import Grid, l2_norm

Q = np.array([0.0, 0.0, 1.0])
U = np.array([1.0, 0.0, 0.0])


def coords(grid):
    return [np.broadcast_to(grid.coordinate(m), grid.shape) for m in range(1, grid.d + 1)]


def constant_field(grid):
    return SphereField(grid, np.broadcast_to(Q.reshape(3, 1, 1), (3,) + grid.shape).copy())


def geodesic_cosine(grid, eps):
    theta = eps * np.cos(coords(grid)[0])
    values = (
        np.sin(theta) * U.reshape(3, 1, 1)
        + np.cos(theta) * Q.reshape(3, 1, 1)
    )
    return SphereField(grid, values, q=Q)


def rotation_matrix():
    a, b = 0.4, 1.1
    ry = np.array([[np.cos(a), 0, np.sin(a)], [0, 1, 0], [-np.sin(a), 0, np.cos(a)]])
    rz = np.array([[np.cos(b), -np.sin(b), 0], [np.sin(b), np.cos(b), 0], [0, 0, 1]])
    return rz @ ry


def rotate_field(s, rot):
    values = np.einsum("ij,j...->i...", rot, s.values)
    return SphereField(s.grid, values, q=rot @ s.q)


class TestEnergy:
    def test_constant_map(self):
        g = Grid(d=2, n=8)
        assert energy(constant_field(g)) == 0.0

    def test_closed_form_value(self):
        # |d_1 s|^2 = eps^2 sin^2(x1); integral over [0, 2pi)^2 is
        # 0.01 * 2 pi^2 ~ 0.197392
        g = Grid(d=2, n=16)
        s = geodesic_cosine(g, 0.1)
        assert energy(s) == pytest.approx(0.01 * 2 * np.pi**2, rel=1e-6)

    def test_equals_psi_mass(self):
        g = Grid(d=2, n=32)
        spec = InitialDataSpec(amplitude=0.05)
        s = generate_initial(spec, g)
        frame = projection_frame(s, tilted_qprime(spec))
        psi = derive_psi(frame)
        psi_mass = sum(l2_norm(g, psi[m]) ** 2 for m in range(g.d))
        assert psi_mass == pytest.approx(energy(s), rel=1e-10)


class TestL2DistanceQ:
    def test_at_base_point(self):
        g = Grid(d=2, n=8)
        assert l2_distance_q(constant_field(g)) == 0.0

    def test_quadrature_oracle(self):
        # |s - q|^2 = 2 (1 - cos(eps theta)) pointwise for geodesic data
        g = Grid(d=2, n=16)
        eps = 0.2
        s = geodesic_cosine(g, eps)
        theta = eps * np.cos(coords(g)[0])
        expected = np.sqrt(np.sum(2.0 * (1.0 - np.cos(theta))) * g.cell_volume)
        assert l2_distance_q(s) == pytest.approx(expected, rel=1e-12)

    def test_rotation_invariance(self):
        g = Grid(d=2, n=16)
        s = geodesic_cosine(g, 0.2)
        rotated = rotate_field(s, rotation_matrix())
        assert l2_distance_q(rotated) == pytest.approx(l2_distance_q(s), rel=1e-12)


class TestCriticalNorm:
    def test_at_base_point(self):
        g = Grid(d=2, n=8)
        assert critical_norm(constant_field(g)) == 0.0

    def test_single_mode_shell(self):
        # all transverse energy at |xi| = 1 so the critical norm equals the
        # L2 norm of the perturbation up to O(eps^2) corrections
        g = Grid(d=2, n=16)
        eps = 1e-4
        s = geodesic_cosine(g, eps)
        assert critical_norm(s) == pytest.approx(eps * np.pi * np.sqrt(2.0), rel=1e-6)

    def test_amplitude_linearity(self):
        g = Grid(d=2, n=16)
        spec = {}
        for eps in (0.02, 0.04):
            s = generate_initial(InitialDataSpec(amplitude=eps), g)
            spec[eps] = critical_norm(s)
        assert spec[0.04] / spec[0.02] == pytest.approx(2.0, rel=1e-3)


class TestFrameBoundRatio:
    def test_degenerate_zero(self):
        g = Grid(d=2, n=8)
        assert frame_bound_ratio(constant_field(g)) == 0.0

    @pytest.mark.parametrize("d,n", [(2, 16), (3, 12)])
    def test_amplitude_sweep_stability(self, d, n):
        g = Grid(d=d, n=n)
        ratios = []
        for eps in (0.02, 0.05, 0.1):
            spec = InitialDataSpec(amplitude=eps)
            s = generate_initial(spec, g)
            qp = np.cross(np.asarray(spec.q, float), spec.resolved_u())
            ratios.append(frame_bound_ratio(s, qp))
        spread = (max(ratios) - min(ratios)) / np.mean(ratios)
        assert spread < 0.2

    def test_rotation_equivariance(self):
        g = Grid(d=2, n=16)
        spec = InitialDataSpec(amplitude=0.05)
        s = generate_initial(spec, g)
        qp = tilted_qprime(spec)
        rot = rotation_matrix()
        assert frame_bound_ratio(rotate_field(s, rot), rot @ qp) == pytest.approx(
            frame_bound_ratio(s, qp), rel=1e-10
        )


class TestGronwallProbe:
    def setup_method(self):
        self.grid = Grid(d=2, n=16)
        self.base = generate_initial(InitialDataSpec(amplitude=0.05), self.grid)
        self.x2 = coords(self.grid)[1]

    def perturbed(self, delta):
        u = self.base.values + delta * np.cos(self.x2) * np.array([1.0, 0, 0]).reshape(3, 1, 1)
        return renormalize(self.grid, u, q=self.base.q)

    def test_identical_data_bitwise(self):
        T = 16 * default_dt(self.grid)
        result = gronwall_probe(self.base, self.base, T)
        assert result.identical
        assert result.rate == 0.0
        assert np.max(result.q_norms) == 0.0

    def test_rate_amplitude_independence(self):
        T = 64 * default_dt(self.grid)
        r1 = gronwall_probe(self.base, self.perturbed(1e-6), T)
        r2 = gronwall_probe(self.base, self.perturbed(1e-7), T)
        assert not r1.identical
        assert abs(r1.rate - r2.rate) <= 0.1 * max(abs(r1.rate), abs(r2.rate))

    def test_reversed_time_rate(self):
        T = 64 * default_dt(self.grid)
        fwd = gronwall_probe(self.base, self.perturbed(1e-6), T)
        bwd = gronwall_probe(self.base, self.perturbed(1e-6), -T)
        assert abs(fwd.rate - bwd.rate) <= 0.1 * max(abs(fwd.rate), abs(bwd.rate))


def make_record(grid, nt, dt, field_fn):
    times = dt * np.arange(nt)
    values = np.stack([field_fn(t) for t in times])
    return SpaceTimeRecord(grid, times, values)


class TestDirectionalNorm:
    def test_zero(self):
        g = Grid(d=2, n=8)
        rec = make_record(g, 10, 0.1, lambda t: np.zeros(g.shape))
        assert directional_norm(rec, 1, 2.0, 2.0) == 0.0

    def test_fubini_p2_q2(self):
        g = Grid(d=2, n=16)
        x1, x2 = coords(g)
        rec = make_record(g, 20, 0.05, lambda t: np.sin(x1) * np.cos(2 * x2) * np.exp(-t))
        full = np.sqrt(np.sum(np.abs(rec.values) ** 2) * g.cell_volume * rec.dt)
        for e in (1, -1, 2, -2):
            assert directional_norm(rec, e, 2.0, 2.0) == pytest.approx(full, rel=1e-10)

    def test_fubini_three_dimensional(self):
        g = Grid(d=3, n=8)
        xs = coords(g)
        rec = make_record(
            g, 12, 0.1, lambda t: np.sin(xs[0]) * np.cos(xs[2]) * np.exp(-0.5 * t)
        )
        full = np.sqrt(np.sum(np.abs(rec.values) ** 2) * g.cell_volume * rec.dt)
        for e in (1, 2, 3, -3):
            assert directional_norm(rec, e, 2.0, 2.0) == pytest.approx(full, rel=1e-10)

    def test_separable_factorization(self):
        g = Grid(d=2, n=16)
        x1, x2 = coords(g)
        gg = np.cos(x1[:, 0])
        rec = make_record(g, 16, 0.1, lambda t: np.cos(x1) * (np.sin(2 * x2) * np.exp(-t)))
        h_slice = rec.values[:, 0, :] / gg[0]  # h(x2, t) factor
        norm_g1 = np.sum(np.abs(gg)) * g.spacing
        norm_h2 = np.sqrt(np.sum(np.abs(h_slice) ** 2) * g.spacing * rec.dt)
        assert directional_norm(rec, 1, 1.0, 2.0) == pytest.approx(norm_g1 * norm_h2, rel=1e-10)

    def test_sup_norms(self):
        g = Grid(d=2, n=8)
        x1, _ = coords(g)
        rec = make_record(g, 5, 0.2, lambda t: np.cos(x1) * (1 + t))
        assert directional_norm(rec, 1, "inf", "inf") == pytest.approx(
            np.max(np.abs(rec.values)), rel=1e-12
        )

    def test_invalid_direction(self):
        g = Grid(d=2, n=8)
        rec = make_record(g, 5, 0.2, lambda t: np.zeros(g.shape))
        with pytest.raises(ValueError):
            directional_norm(rec, 3, 2.0, 2.0)
        with pytest.raises(ValueError):
            directional_norm(rec, 0, 2.0, 2.0)


class TestXkNorm:
    def free_wave_record(self, nt=128, dt=0.05):
        g = Grid(d=2, n=16)
        x1, _ = coords(g)
        xi0, omega = 2.0, 4.0  # |xi0|^2 = 4, annulus k = 1
        times = dt * np.arange(nt)
        values = np.exp(1j * xi0 * x1)[None] * np.exp(-1j * omega * times)[:, None, None]
        return SpaceTimeRecord(g, times, values)

    def test_zero_record(self):
        g = Grid(d=2, n=8)
        rec = make_record(g, 16, 0.05, lambda t: np.zeros(g.shape))
        assert xk_norm(rec, 1) == 0.0

    def test_free_wave_concentrates_in_lowest_shell(self):
        from spheremap.spectral import eta0

        rec = self.free_wave_record()
        g = rec.grid
        taper = np.hanning(len(rec.times)).reshape(-1, 1, 1)
        fhat = np.fft.fftn(rec.values * taper)
        tau = 2 * np.pi * np.fft.fftfreq(len(rec.times), rec.dt).reshape(-1, 1, 1)
        mu = tau + g.k_squared[None]
        annulus = (g.k_abs >= 1.0) & (g.k_abs <= 4.0)
        power = np.abs(fhat) ** 2 * annulus[None]
        jmax = int(np.ceil(np.log2(np.max(np.abs(mu))))) + 1
        masses = []
        for j in range(jmax + 1):
            w = eta0(mu) if j == 0 else eta0(mu / 2**j) - eta0(mu / 2 ** (j - 1))
            masses.append(float(np.sum(w**2 * power)))
        assert sum(masses[2:]) / sum(masses) < 0.05

    def test_lower_bound_by_base_shell(self):
        from spheremap.spectral import eta0

        rec = self.free_wave_record()
        g = rec.grid
        taper = np.hanning(len(rec.times)).reshape(-1, 1, 1)
        fhat = np.fft.fftn(rec.values * taper)
        tau = 2 * np.pi * np.fft.fftfreq(len(rec.times), rec.dt).reshape(-1, 1, 1)
        mu = tau + g.k_squared[None]
        annulus = (g.k_abs >= 1.0) & (g.k_abs <= 4.0)
        weight = (g.length**g.d / g.n ** (2 * g.d)) * (len(rec.times) * rec.dt / len(rec.times) ** 2)
        base_mass = np.sqrt(np.sum(eta0(mu) ** 2 * np.abs(fhat) ** 2 * annulus[None]) * weight)
        assert xk_norm(rec, 1) >= base_mass

    def test_short_record_rejected(self):
        g = Grid(d=2, n=8)
        rec = make_record(g, 4, 0.05, lambda t: np.zeros(g.shape))
        with pytest.raises(ValueError, match="too short"):
            xk_norm(rec, 1)

    def test_empty_annulus(self):
        rec = self.free_wave_record()
        assert xk_norm(rec, -40) == 0.0

    def test_undersampled_record_rejected(self):
        g = Grid(d=2, n=16)
        rec = make_record(g, 16, 1.0, lambda t: np.zeros(g.shape))  # Nyquist pi < 16
        with pytest.raises(ValueError, match="modulation"):
            xk_norm(rec, 1)


class TestDiagnosticsRow:
    def test_full_row_on_small_data(self):
        g = Grid(d=2, n=16)
        spec = InitialDataSpec(amplitude=0.05)
        s = generate_initial(spec, g)
        row = diagnostics_row(0.5, s, 1e-9, tilted_qprime(spec))
        assert row.t == 0.5
        assert row.energy > 0
        assert row.div_a < 1e-10
        assert np.isfinite(row.as_tuple()).all()

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            DiagnosticsRow(0.0, np.nan, 0, 0, 0, 0, 0, 0, 0)
