"""Spectral stability analysis and rate-distortion sweeps.

The combination matrix acts as the identity on the target subspace and as a
contraction J on its orthogonal complement. Everything here derives from the
eigenstructure of that minor block: the contraction factor, the conditioning
of the eigenbasis, the admissible mixing-parameter bound, and an a priori
ceiling on the variable-rate bit cost at steady state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import codec
from .graphs import CombinationMatrix, SubspaceBasis, projector
from .learning import RunConfig, run, steady_mean

DEFECTIVE_COND = 1e8

__all__ = [
    "DefectiveMatrix",
    "SpectralReport",
    "SweepPoint",
    "spectral_report",
    "gamma_bound",
    "rate_upper_bound",
    "rate_distortion_sweep",
    "save_sweep_csv",
]


class DefectiveMatrix(ValueError):
    """The minor block is not diagonalizable within tolerance."""


@dataclass(frozen=True)
class SpectralReport:
    """Spectral quantities of a combination matrix relative to its subspace.

    rho_j: spectral radius of A - P_U (the minor-block contraction factor).
    rho_i_minus_j: max |1 - lambda| over the minor-block eigenvalues.
    v1, v2: 2-norms of the inverse eigenbasis and the eigenbasis [U | V_R].
    epsilon_used: perturbation applied to reach a diagonalizable form; always
    0 here, since defective input raises instead of being perturbed.
    """

    rho_j: float
    rho_i_minus_j: float
    v1: float
    v2: float
    epsilon_used: float = 0.0


@dataclass(frozen=True)
class SweepPoint:
    param_value: float
    rate_bits: float
    msd: float
    msd_db: float
    diverged: bool


def _complement(u):
    """Orthonormal basis of the orthogonal complement of Range(u)."""
    p = u.shape[1]
    return np.linalg.svd(u, full_matrices=True)[0][:, p:]


def spectral_report(comb: CombinationMatrix, basis: SubspaceBasis) -> SpectralReport:
    """Diagonalize the minor block of a combination matrix.

    Splits the space as Range(U) + complement, eigendecomposes
    J = Q^T A Q on the complement (eigh when symmetric, so orthonormal
    eigenvectors are preserved exactly), and assembles the full eigenbasis
    V = [U | Q S]. Raises DefectiveMatrix when that basis is ill conditioned
    instead of perturbing toward a diagonalizable form.
    """
    a = comb.a
    u = basis.u
    q = _complement(u)
    j = q.T @ a @ q

    if np.allclose(j, j.T, rtol=0.0, atol=1e-12):
        lam, s = np.linalg.eigh(j)
        lam = lam.astype(complex)
    else:
        lam, s = np.linalg.eig(j)
        if np.iscomplexobj(s) and np.allclose(s.imag, 0.0):
            s = s.real

    v = np.hstack([u, q @ s])
    sv = np.linalg.svd(v, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > DEFECTIVE_COND:
        raise DefectiveMatrix(
            f"eigenbasis condition number {sv[0] / max(sv[-1], 1e-300):.3g} "
            f"exceeds {DEFECTIVE_COND:g}")

    return SpectralReport(
        rho_j=float(np.max(np.abs(lam))),
        rho_i_minus_j=float(np.max(np.abs(1.0 - lam))),
        v1=float(1.0 / sv[-1]),
        v2=float(sv[0]),
        epsilon_used=0.0,
    )


def gamma_bound(report: SpectralReport, beta_q_max: float) -> float:
    """Supremum of provably admissible mixing parameters.

    min{1, (1 - (rho_j + eps)) / (4 v1^2 v2^2 beta_q_max (rho_{I-J} + eps)^2)}
    with eps = report.epsilon_used; beta_q_max is the largest relative noise
    coefficient among the agents' quantizers. Zero relative noise clips to 1.
    """
    if beta_q_max < 0:
        raise ValueError("beta_q_max must be nonnegative")
    if beta_q_max == 0.0:
        return 1.0
    eps = report.epsilon_used
    num = 1.0 - (report.rho_j + eps)
    den = 4.0 * report.v1**2 * report.v2**2 * beta_q_max \
        * (report.rho_i_minus_j + eps) ** 2
    return min(1.0, num / den)


def rate_upper_bound(omega, eta, chi_ms, m_k) -> float:
    """Steady-state ceiling on the per-round variable-rate cost of the
    logarithmic-companding quantizer, in bits.

    log2(3) * m_k * (2 + log2( ln(1 + (omega/eta) sqrt(chi_ms))
                               / (2 ln(omega + sqrt(1 + omega^2))) + 2 ))
    where chi_ms estimates the steady mean square of the quantizer input.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if chi_ms < 0:
        raise ValueError("chi_ms must be nonnegative")
    inner = math.log1p((omega / eta) * math.sqrt(chi_ms)) / (2.0 * math.asinh(omega))
    return codec.BITS_PER_SYMBOL * m_k * (2.0 + math.log2(inner + 2.0))


def rate_distortion_sweep(template: RunConfig, models, basis, comb, grid):
    """Steady-state (rate, distortion) pairs over a quantizer grid.

    grid is a sequence of (param_value, QuantizerSpec). Each point reruns the
    simulator with the template config and that quantizer, then averages bits
    per component and MSD over the steady window and the Monte-Carlo runs.
    Diverged points come back flagged with infinite MSD, never dropped.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("parameter grid must be nonempty")
    points = []
    for value, spec in grid:
        cfg = replace(template, quantizer=spec, on_divergence="flag")
        res = run(cfg, models, basis, comb)
        if res.diverged:
            points.append(SweepPoint(float(value), float("nan"), float("inf"),
                                     float("inf"), True))
            continue
        rate = float(steady_mean(res.rate))
        msd = float(steady_mean(res.msd))
        points.append(SweepPoint(float(value), rate, msd,
                                 10.0 * math.log10(msd), False))
    return points


def save_sweep_csv(path, points, version, seed):
    with open(path, "w") as fh:
        fh.write(f"# subspaceq {version} seed={seed}\n")
        fh.write("param_value,rate_bits,msd,msd_db,diverged_flag\n")
        for p in points:
            fh.write(f"{p.param_value:.10g},{p.rate_bits:.10g},"
                     f"{p.msd:.10g},{p.msd_db:.10g},{int(p.diverged)}\n")
