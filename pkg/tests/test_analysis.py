"""Tests for spectral analysis and rate-distortion sweeps."""

import math

import numpy as np
import pytest

from subspaceq import analysis, codec, graphs, learning, quantizers
from subspaceq.analysis import SpectralReport
from subspaceq.graphs import CombinationMatrix
from subspaceq.learning import RunConfig


def small_world(n, lattice_m, shortcut_q, seed):
    rng = np.random.default_rng(seed)
    edges = set()
    for k in range(n):
        for d in range(1, lattice_m + 1):
            edges.add(tuple(sorted((k, (k + d) % n))))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < shortcut_q:
                edges.add((i, j))
    return graphs.build_topology(n, [(i + 1, j + 1) for i, j in edges], seed=0)


# ---------------------------------------------------------------------------
# spectral_report

def test_projector_report_is_trivial():
    n, l = 6, 2
    basis = graphs.subspace_consensus(n, l)
    top = graphs.build_topology(n, 1.0, seed=1)
    comb = CombinationMatrix(graphs.projector(basis), top, (l,) * n)
    rep = analysis.spectral_report(comb, basis)
    assert rep.rho_j == pytest.approx(0.0, abs=1e-12)
    assert rep.rho_i_minus_j == pytest.approx(1.0, abs=1e-12)
    assert rep.v1 == pytest.approx(1.0, abs=1e-10)
    assert rep.v2 == pytest.approx(1.0, abs=1e-10)
    assert rep.epsilon_used == 0.0


def test_metropolis_block_matches_scalar_eigensolve():
    # rho_j of W (x) I must equal the second-largest |eigenvalue| of W itself
    n, l = 8, 3
    top = graphs.build_topology(n, 0.45, seed=21)
    w = graphs.metropolis_weights(top)
    basis = graphs.subspace_consensus(n, l)
    comb = graphs.build_combination(top, basis, mode="consensus-metropolis")
    rep = analysis.spectral_report(comb, basis)
    eig = np.sort(np.abs(np.linalg.eigvalsh(w)))
    assert rep.rho_j == pytest.approx(eig[-2], abs=1e-10)
    assert rep.v1 == pytest.approx(1.0, abs=1e-8)
    assert rep.v2 == pytest.approx(1.0, abs=1e-8)


def test_symmetric_constrained_build_has_orthonormal_basis():
    top = small_world(10, 3, 0.2, seed=13)
    basis = graphs.subspace_smooth(top, 2, 2, weight=0.1)
    comb = graphs.build_combination(top, basis)
    assert np.allclose(comb.a, comb.a.T, atol=1e-9)
    rep = analysis.spectral_report(comb, basis)
    assert rep.rho_j < 1.0
    assert rep.v1 == pytest.approx(1.0, abs=1e-8)
    assert rep.v2 == pytest.approx(1.0, abs=1e-8)


def test_rho_matches_direct_spectral_radius():
    top = small_world(10, 3, 0.2, seed=29)
    basis = graphs.subspace_smooth(top, 3, 2, weight=0.1)
    comb = graphs.build_combination(top, basis)
    rep = analysis.spectral_report(comb, basis)
    direct = graphs.spectral_radius(comb.a - graphs.projector(basis))
    assert rep.rho_j == pytest.approx(direct, abs=1e-9)


def test_defective_minor_block_raises():
    # P_U + Q B Q^T with B a Jordan block is a valid combination matrix but
    # has no well-conditioned eigenbasis
    n, l = 3, 1
    basis = graphs.subspace_consensus(n, l)
    u = basis.u
    q = np.linalg.svd(u, full_matrices=True)[0][:, 1:]
    b = np.array([[0.5, 1.0], [0.0, 0.5]])
    a = graphs.projector(basis) + q @ b @ q.T
    top = graphs.build_topology(n, 1.0, seed=2)
    comb = CombinationMatrix(a, top, (l,) * n)
    assert graphs.spectral_radius(a - graphs.projector(basis)) < 1
    with pytest.raises(analysis.DefectiveMatrix, match="condition number"):
        analysis.spectral_report(comb, basis)


def test_minor_contraction_controls_gamma_damped_spectrum():
    # sanity of the stability argument: |(1-g) + g*lam| <= 1 - g(1 - rho(J))
    # for every minor eigenvalue lam and every mixing parameter on a grid
    top = small_world(10, 3, 0.2, seed=31)
    basis = graphs.subspace_smooth(top, 2, 3, weight=0.1)
    comb = graphs.build_combination(top, basis)
    u = basis.u
    q = np.linalg.svd(u, full_matrices=True)[0][:, u.shape[1]:]
    lam = np.linalg.eigvals(q.T @ comb.a @ q)
    rho = np.max(np.abs(lam))
    for g in np.arange(0.1, 1.01, 0.1):
        lhs = np.max(np.abs((1.0 - g) + g * lam))
        assert lhs <= 1.0 - g * (1.0 - rho) + 1e-12


# ---------------------------------------------------------------------------
# gamma_bound

def test_gamma_bound_frozen_arithmetic():
    rep = SpectralReport(rho_j=0.5, rho_i_minus_j=0.5, v1=1.0, v2=1.0)
    assert analysis.gamma_bound(rep, 1.0) == pytest.approx(0.5 / (4 * 0.25))
    assert analysis.gamma_bound(rep, 1.0) == pytest.approx(0.5)


def test_gamma_bound_clips_and_validates():
    rep = SpectralReport(rho_j=0.9, rho_i_minus_j=1.9, v1=2.0, v2=3.0)
    assert analysis.gamma_bound(rep, 0.0) == 1.0
    tiny = analysis.gamma_bound(rep, 1e-9)
    assert tiny == 1.0  # huge raw bound, clipped
    with pytest.raises(ValueError):
        analysis.gamma_bound(rep, -0.1)


def test_gamma_bound_monotone_in_noise_coefficient():
    rep = SpectralReport(rho_j=0.6, rho_i_minus_j=1.4, v1=1.2, v2=1.1)
    grid = [analysis.gamma_bound(rep, b) for b in np.linspace(0.0, 4.0, 25)]
    assert all(a >= b for a, b in zip(grid, grid[1:]))


def test_gamma_bound_on_projector_network_admits_large_mixing():
    # rho_j = 0 networks keep the full (0, 1] range for moderate noise
    n, l = 10, 2
    basis = graphs.subspace_consensus(n, l)
    top = graphs.build_topology(n, 1.0, seed=3)
    comb = CombinationMatrix(graphs.projector(basis), top, (l,) * n)
    rep = analysis.spectral_report(comb, basis)
    beta_sq = quantizers.noise_budget(quantizers.anq(0.25, 0.01, l)).beta_sq
    assert analysis.gamma_bound(rep, beta_sq) == 1.0


# ---------------------------------------------------------------------------
# rate_upper_bound

def test_rate_bound_at_zero_input_energy():
    for m_k in (1, 5, 64):
        expect = 3.0 * codec.BITS_PER_SYMBOL * m_k
        assert analysis.rate_upper_bound(0.25, 0.01, 0.0, m_k) == pytest.approx(expect)


def test_rate_bound_monotone_in_input_energy():
    vals = [analysis.rate_upper_bound(0.5, 0.02, c, 5)
            for c in np.linspace(0.0, 10.0, 40)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_rate_bound_validates_parameters():
    with pytest.raises(ValueError):
        analysis.rate_upper_bound(0.0, 0.01, 1.0, 5)
    with pytest.raises(ValueError):
        analysis.rate_upper_bound(0.5, 0.0, 1.0, 5)
    with pytest.raises(ValueError):
        analysis.rate_upper_bound(0.5, 0.01, -1.0, 5)


def test_measured_steady_rate_below_bound():
    # simulator output against the closed form, per agent
    n, l = 6, 2
    top = graphs.build_topology(n, 1.0, seed=7)
    basis = graphs.subspace_smooth(top, 2, l, weight=0.1)
    comb = graphs.build_combination(top, basis)
    rng = np.random.default_rng(11)
    models = [learning.DataModel(rng.uniform(1.5, 2.5), rng.uniform(0.1, 0.2),
                                 rng.normal(0.4, 1.0, l)) for _ in range(n)]
    omega, mu = 0.25, 0.01
    eta = mu / np.sqrt(2 * l)
    cfg = RunConfig(mu=mu, gamma=0.9, iterations=1500, runs=2,
                    quantizer=quantizers.anq(omega, eta, l), seed=17)
    res = learning.run(cfg, models, basis, comb)
    for k in range(n):
        chi_ms = learning.steady_mean(res.chi_sq[:, k])
        bound = analysis.rate_upper_bound(omega, eta, chi_ms, l)
        measured = learning.steady_mean(res.bits[:, k])
        assert measured <= bound


# ---------------------------------------------------------------------------
# rate_distortion_sweep

def sweep_setup():
    n, l = 4, 2
    top = graphs.build_topology(n, 1.0, seed=19)
    basis = graphs.subspace_smooth(top, 2, l, weight=0.1)
    comb = graphs.build_combination(top, basis)
    rng = np.random.default_rng(23)
    models = [learning.DataModel(rng.uniform(1.5, 2.5), rng.uniform(0.1, 0.2),
                                 rng.normal(0.4, 1.0, l)) for _ in range(n)]
    return models, basis, comb, l


def test_uniform_sweep_tradeoff_direction():
    models, basis, comb, l = sweep_setup()
    template = RunConfig(mu=0.02, gamma=0.9, iterations=1200, runs=2,
                         quantizer=quantizers.identity(l), seed=3)
    deltas = [0.002, 0.02, 0.2]
    grid = [(d, quantizers.uniform(d, l)) for d in deltas]
    pts = analysis.rate_distortion_sweep(template, models, basis, comb, grid)
    rates = [p.rate_bits for p in pts]
    msds = [p.msd for p in pts]
    assert rates[0] > rates[1] > rates[2]   # coarser cells, fewer bits
    assert msds[2] > msds[0]                # and more distortion
    assert not any(p.diverged for p in pts)


def test_identity_sweep_point_is_full_precision_baseline():
    models, basis, comb, l = sweep_setup()
    template = RunConfig(mu=0.02, gamma=0.9, iterations=800, runs=1,
                         quantizer=quantizers.identity(l), seed=5)
    pts = analysis.rate_distortion_sweep(
        template, models, basis, comb, [(0.0, quantizers.identity(l))])
    assert pts[0].rate_bits == pytest.approx(32.0)
    res = learning.run(template, models, basis, comb)
    assert pts[0].msd == pytest.approx(float(learning.steady_mean(res.msd)))


def test_sweep_flags_diverged_points():
    models, basis, comb, l = sweep_setup()
    template = RunConfig(mu=80.0, gamma=1.0, iterations=600, runs=1,
                         quantizer=quantizers.identity(l), seed=7)
    pts = analysis.rate_distortion_sweep(
        template, models, basis, comb,
        [(1.0, quantizers.identity(l)), (2.0, quantizers.identity(l))])
    assert all(p.diverged for p in pts)
    assert all(math.isinf(p.msd) for p in pts)
    assert all(math.isnan(p.rate_bits) for p in pts)


def test_sweep_rejects_empty_grid():
    models, basis, comb, l = sweep_setup()
    template = RunConfig(mu=0.02, gamma=0.9, iterations=600, runs=1,
                         quantizer=quantizers.identity(l), seed=3)
    with pytest.raises(ValueError, match="nonempty"):
        analysis.rate_distortion_sweep(template, models, basis, comb, [])


def test_sweep_csv_roundtrip(tmp_path):
    pts = [analysis.SweepPoint(0.1, 12.5, 1e-3, -30.0, False),
           analysis.SweepPoint(0.2, float("nan"), float("inf"), float("inf"), True)]
    path = tmp_path / "sweep.csv"
    analysis.save_sweep_csv(path, pts, version="0.1.0", seed=9)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#") and "seed=9" in lines[0]
    assert lines[1] == "param_value,rate_bits,msd,msd_db,diverged_flag"
    data = np.loadtxt(path, delimiter=",", skiprows=2)
    assert data.shape == (2, 5)
    assert data[0, 4] == 0 and data[1, 4] == 1
    assert np.isinf(data[1, 2]) and np.isnan(data[1, 1])
