"""Closed-form benchmark beamformers: MRT, ZF, SLNR, and weighted SLNR.

The weighted variant solves, per user u,

    f_u  ~  (sum_{l != u} omega_l h_l h_l^H + sigma_n^2 I)^{-1} h_u

with leakage weights omega_l proportional to inverse channel gains raised
to a tunable exponent alpha; alpha = 0 gives uniform weights 1/N_u while
conventional SLNR keeps unnormalized unit weights. All directions are
returned unit-norm (the solution is only defined up to scale and every
metric is phase-invariant), with the fixed equal power split attached.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import pd_solve, rank1_accumulate
from .metrics import BeamformerSet

ZF_MAX_CONDITION = 1e10


@dataclass(frozen=True)
class WslnrWeights:
    """Normalized leakage weights omega (sum 1) for exponent alpha."""

    omega: np.ndarray
    alpha: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if abs(float(np.sum(self.omega)) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def _unit_rows(f: np.ndarray) -> np.ndarray:
    return f / np.linalg.norm(f, axis=1)[:, None]


def _noise_variance(sample) -> float:
    # Single common sigma_n^2; fall back to the mean if per-user values differ.
    return float(np.mean(np.asarray(sample.sigma2, dtype=np.float64)))


def mrt(sample, power_per_user: float) -> BeamformerSet:
    """Maximum ratio transmission: beam along the user's own channel."""
    h = np.asarray(sample.h, dtype=np.complex128)
    return BeamformerSet(f_tilde=_unit_rows(h), power_per_user=power_per_user)


def zf(sample, power_per_user: float) -> BeamformerSet:
    """Zero forcing: unit-normalized columns of H^H (H H^H)^{-1}.

    Requires N_u <= N_t and a well-conditioned channel matrix; the
    normalized directions still satisfy h_u^H f_l = 0 for l != u.
    """
    h = np.asarray(sample.h, dtype=np.complex128)
    n_u, n_t = h.shape
    if n_u > n_t:
        raise ValueError(f"zero forcing needs N_u <= N_t, got N_u={n_u}, N_t={n_t}")
    svals = np.linalg.svd(h, compute_uv=False)
    cond = np.inf if svals[-1] == 0 else svals[0] / svals[-1]
    if cond > ZF_MAX_CONDITION:
        raise ValueError(f"rank-deficient channel matrix: condition number {cond:.3e} "
                         f"exceeds {ZF_MAX_CONDITION:.0e}")
    gram = h @ h.conj().T
    # Columns of H^H (H H^H)^{-1}: column u solves gram x = e_u, then f_u = H^H x.
    eye = np.eye(n_u, dtype=np.complex128)
    cols = np.stack([h.conj().T @ pd_solve(gram, eye[u]) for u in range(n_u)])
    return BeamformerSet(f_tilde=_unit_rows(cols), power_per_user=power_per_user)


def wslnr_weights(sample, alpha: float) -> WslnrWeights:
    """Inverse-gain weights: w_l = ||h_l||^(-2 alpha), normalized to sum 1."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    h = np.asarray(sample.h, dtype=np.complex128)
    gains = np.linalg.norm(h, axis=1) ** 2
    unnormalized = gains ** (-alpha)
    return WslnrWeights(omega=unnormalized / unnormalized.sum(), alpha=alpha)


def _leakage_solve(h: np.ndarray, weights: np.ndarray, sigma2: float) -> np.ndarray:
    n_u, n_t = h.shape
    rows = []
    for u in range(n_u):
        others = [h[l] for l in range(n_u) if l != u]
        w = [weights[l] for l in range(n_u) if l != u]
        a = rank1_accumulate(others, w, ridge=sigma2, dim=n_t)
        rows.append(pd_solve(a, h[u]))
    return _unit_rows(np.stack(rows))


def wslnr(sample, alpha: float, power_per_user: float) -> BeamformerSet:
    """Weighted-SLNR beamformer with inverse-gain leakage weights."""
    h = np.asarray(sample.h, dtype=np.complex128)
    omega = wslnr_weights(sample, alpha).omega
    f = _leakage_solve(h, omega, _noise_variance(sample))
    return BeamformerSet(f_tilde=f, power_per_user=power_per_user)


def slnr(sample, power_per_user: float) -> BeamformerSet:
    """Conventional SLNR: the same solve with unit (unnormalized) weights."""
    h = np.asarray(sample.h, dtype=np.complex128)
    f = _leakage_solve(h, np.ones(h.shape[0]), _noise_variance(sample))
    return BeamformerSet(f_tilde=f, power_per_user=power_per_user)
