"""Differentiable hinge-Lagrangian loss and the dual-multiplier update.

The training objective is

    L = -( S_bar + lambda * min(J_bar - J_LB, 0) )

where S_bar is the batch mean of max-min normalized sum rates and J_bar
the batch mean of Jain's index, both computed inside the graph from the
predicted beamformers. lambda enters as a constant: it is driven by the
dual-ascent rule, never by gradient descent. The batch extremes used by
the max-min scaling are detached, so the gradient of S_bar stays
proportional to the gradient of the raw mean sum rate.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor
from .network import EventCounter, normalize_rows

MAXMIN_MIN_SPREAD = 1e-9
_LOG2 = math.log(2.0)

degenerate_batch_events = EventCounter("degenerate max-min batches pinned to 0.5")


@dataclass(frozen=True)
class DualState:
    """Lagrange multiplier plus the fairness target and dual-step knobs."""

    lam: float
    j_lb: float
    eps: float = 0.003
    eta: float = 0.01

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must stay nonnegative, got {self.lam}")
        if not (0 < self.j_lb < 1):
            raise ValueError(f"fairness target must lie in (0, 1), got {self.j_lb}")
        if self.eps <= 0 or self.eta <= 0:
            raise ValueError("eps and eta must be positive")


@dataclass
class BatchLossReport:
    """Scalar loss node plus the detached batch statistics for logging."""

    loss: Tensor
    s_bar: float                 # mean normalized sum rate, in [0, 1]
    j_bar: float                 # mean Jain's index
    violation: float             # j_bar - j_lb
    per_stream: list             # (S_k, J_k) per batch element


def graph_rates(samples, raw_bf: Tensor, power_per_user: float):
    """In-graph rates from raw network outputs.

    The complex products |h_u^H f_l|^2 are expanded into real matmuls
    against the (constant) channel re/im parts, so every returned node
    is differentiable with respect to `raw_bf`.

    Returns (rates [N_b, N_u], sum_rates [N_b], jains [N_b]) tensors.
    """
    h = np.stack([np.asarray(s.h) for s in samples])
    sigma2 = np.stack([np.asarray(s.sigma2) for s in samples])
    n_b, n_u, n_t = h.shape
    if raw_bf.shape != (n_b, n_u, 2 * n_t):
        raise ValueError(
            f"raw beamformers {raw_bf.shape} do not match batch ({n_b}, {n_u}, {2 * n_t})")
    dtype = raw_bf.dtype
    hr = Tensor(h.real.astype(dtype))
    hi = Tensor(h.imag.astype(dtype))
    f = normalize_rows(raw_bf)
    fr = f[..., :n_t].swapaxes(-1, -2)
    fi = f[..., n_t:].swapaxes(-1, -2)
    # [N_b, user, beam] real and imaginary parts of h_u^H f_l
    re = hr.matmul(fr) + hi.matmul(fi)
    im = hr.matmul(fi) - hi.matmul(fr)
    gain = re * re + im * im
    diag = Tensor(np.eye(n_u, dtype=dtype))
    signal = (gain * diag).sum(axis=-1) * power_per_user
    interference = gain.sum(axis=-1) * power_per_user - signal
    sinr = signal / (interference + Tensor(sigma2.astype(dtype)))
    rates = (sinr + 1.0).log() * (1.0 / _LOG2)
    sums = rates.sum(axis=-1)
    jains = sums * sums / ((rates * rates).sum(axis=-1) * float(n_u))
    return rates, sums, jains


def maxmin_normalize(sums: Tensor) -> Tensor:
    """Per-batch max-min scaling with the extremes treated as constants.

    A single-element batch or a spread below MAXMIN_MIN_SPREAD cannot be
    scaled; those batches are pinned to 0.5 (no sum-rate gradient) and
    counted rather than raised, since training must survive them.
    """
    s = sums.data
    lo = float(s.min())
    hi = float(s.max())
    if s.size < 2 or hi - lo < MAXMIN_MIN_SPREAD:
        degenerate_batch_events.bump()
        return Tensor(np.full_like(s, 0.5))
    return (sums - lo) * (1.0 / (hi - lo))


def hinge_loss(s_bar: Tensor, j_bar: Tensor, dual: DualState) -> Tensor:
    """-(S_bar + lambda * min(J_bar - J_LB, 0)).

    min(x, 0) is realized as -relu(-x) with relu'(0) = 0, so at
    J_bar = J_LB the subgradient w.r.t. J_bar is the inactive-side 0,
    and the loss is exactly -S_bar whenever the constraint holds.
    """
    slack = j_bar - dual.j_lb
    return -s_bar + (-slack).relu() * dual.lam


def dual_update(dual: DualState, j_bar: float) -> DualState:
    """One dual-ascent step: lambda += eta * (J_LB - J_bar), floored at 0.

    Inside the tolerance band |J_bar - J_LB| <= eps the multiplier is
    left untouched. The floor keeps an overshooting batch (fairness well
    above target) from turning lambda into a reward for unfairness.
    """
    if abs(j_bar - dual.j_lb) <= dual.eps:
        return dual
    return replace(dual, lam=max(0.0, dual.lam + dual.eta * (dual.j_lb - j_bar)))


def batch_loss(samples, raw_bf: Tensor, power_per_user: float,
               dual: DualState) -> BatchLossReport:
    """Full loss pipeline: rates -> max-min scaling -> hinge-Lagrangian."""
    _, sums, jains = graph_rates(samples, raw_bf, power_per_user)
    s_bar = maxmin_normalize(sums).mean()
    j_bar = jains.mean()
    loss = hinge_loss(s_bar, j_bar, dual)
    return BatchLossReport(
        loss=loss,
        s_bar=float(s_bar.data),
        j_bar=float(j_bar.data),
        violation=float(j_bar.data) - dual.j_lb,
        per_stream=list(zip(sums.data.tolist(), jains.data.tolist())),
    )
