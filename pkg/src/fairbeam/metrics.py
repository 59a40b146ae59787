"""Evaluation-side rate and fairness metrics.

Everything here is computed in double precision, independent of the
training graph, so this module doubles as the oracle the differentiable
loss is checked against.
"""

from dataclasses import dataclass, field

import numpy as np

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class BeamformerSet:
    """Unit-norm beam directions plus the common per-user power.

    f_tilde : [N_u, N_t] complex, each row unit norm
    power_per_user : P_tot / N_u in watts (the power split is fixed)
    """

    f_tilde: np.ndarray
    power_per_user: float

    def __post_init__(self):
        f = np.asarray(self.f_tilde)
        if f.ndim != 2:
            raise ValueError(f"f_tilde must be [N_u, N_t], got shape {f.shape}")
        if self.power_per_user <= 0:
            raise ValueError(f"power_per_user must be positive, got {self.power_per_user}")
        norms = np.linalg.norm(f, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"beamformer row {worst} has norm {norms[worst]!r}, expected 1")

    @property
    def n_users(self) -> int:
        return self.f_tilde.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.f_tilde.shape[1]


@dataclass(frozen=True)
class RateReport:
    """Per-user SINR/rate plus the two scalar figures of merit."""

    sinr: np.ndarray        # [N_u], linear
    rate: np.ndarray        # [N_u], bit/s/Hz
    sum_rate: float
    jain: float


def jain_index(rates) -> float:
    """Fairness (sum R)^2 / (N * sum R^2), in [1/N, 1] for nonnegative rates."""
    r = np.asarray(rates, dtype=np.float64)
    total_sq = float(np.sum(r * r))
    if total_sq == 0.0:
        raise ValueError("Jain's index is undefined for all-zero rates")
    return float(np.sum(r)) ** 2 / (r.size * total_sq)


def evaluate_rates(sample, bf: BeamformerSet) -> RateReport:
    """SINR, per-user rate, sum rate, and Jain's index for one channel drop.

    sinr_u = P_u |h_u^H f_u|^2 / (sum_{l != u} P_u |h_u^H f_l|^2 + sigma_u^2)
    with P_u = P_tot / N_u, and rate_u = log2(1 + sinr_u).
    """
    h = np.asarray(sample.h, dtype=np.complex128)
    sigma2 = np.asarray(sample.sigma2, dtype=np.float64)
    f = np.asarray(bf.f_tilde, dtype=np.complex128)
    if h.shape != f.shape:
        raise ValueError(f"channel shape {h.shape} does not match beamformers {f.shape}")
    # gain[u, l] = |h_u^H f_l|^2
    gain = np.abs(h.conj() @ f.T) ** 2
    sig = bf.power_per_user * np.diag(gain)
    interference = bf.power_per_user * (gain.sum(axis=1) - np.diag(gain))
    sinr = sig / (interference + sigma2)
    rate = np.log2(1.0 + sinr)
    return RateReport(sinr=sinr, rate=rate, sum_rate=float(rate.sum()), jain=jain_index(rate))


def ecdf(values):
    """Empirical CDF points (v_(i), i/n) over the sorted values.

    Duplicates keep their own steps, so the cumulative column is i/n
    for i = 1..n with the final value exactly 1.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("ecdf of an empty sample is undefined")
    v = np.sort(v)
    probs = np.arange(1, v.size + 1) / v.size
    return list(zip(v.tolist(), probs.tolist()))
