"""Adaptive dual-multiplier training loop, model evaluation, and checkpoints.

One epoch runs ceil(N_train / N_b) steps over a fresh permutation of the
training set (batches never repeat an index within an epoch). Each step:
forward -> in-graph rates -> max-min scaling -> hinge loss -> backward,
then the dual update from the batch mean Jain, then the Adam step. The
loop stops when the gradient-norm EMA falls under `grad_tol` while the
validation Jain sits inside the dual tolerance band, or at `max_epochs`.
The returned model is the best-validation-sum-rate checkpoint among
epochs whose validation Jain was within tolerance of the target, falling
back to the final parameters when no epoch qualified.
"""

import csv
import json
import struct
from dataclasses import dataclass, asdict, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import metrics
from .autodiff import Tensor, global_grad_norm
from .channel import Dataset, feature_dim, features_array
from .fairness import DualState, batch_loss, dual_update
from .network import Adam, Model, ModelConfig, normalize_columns

CHECKPOINT_MAGIC = b"FBCK"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIIIIQQ")


class CheckpointFormatError(ValueError):
    """Raised on bad magic, unsupported version, or truncated parameters."""


@dataclass(frozen=True)
class TrainConfig:
    j_lb: float
    model: ModelConfig
    batch_size: int = 256
    lr: float = 0.002
    eps: float = 0.003            # dual tolerance band
    eta: float = 0.01             # dual step
    lambda0: float = 1.0
    max_epochs: int = 100
    grad_tol: float = 1e-3        # threshold on the grad-norm EMA
    grad_ema_decay: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.j_lb < 1):
            raise ValueError(f"j_lb must lie in (0, 1), got {self.j_lb}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be at least 2, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be at least 1, got {self.max_epochs}")


@dataclass(frozen=True)
class BatchRecord:
    step: int
    epoch: int
    loss: float
    s_bar: float
    j_bar: float
    lam: float
    grad_ema: float


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    val_sum_rate: float
    val_jain: float


@dataclass
class TrainHistory:
    batches: list = field(default_factory=list)
    epochs: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "epoch", "loss", "s_bar", "j_bar", "lambda", "grad_ema"])
            for r in self.batches:
                writer.writerow([r.step, r.epoch, f"{r.loss:.10g}", f"{r.s_bar:.10g}",
                                 f"{r.j_bar:.10g}", f"{r.lam:.10g}", f"{r.grad_ema:.10g}"])

    def summary(self) -> dict:
        return {
            "steps": len(self.batches),
            "epochs": [asdict(e) for e in self.epochs],
            "final_lambda": self.batches[-1].lam if self.batches else None,
            "final_grad_ema": self.batches[-1].grad_ema if self.batches else None,
        }


@dataclass
class EvalSummary:
    """Deterministic test-set pass: scalar means plus the raw per-sample data."""

    mean_sum_rate: float
    mean_jain: float
    rates: np.ndarray       # [N, N_u] bit/s/Hz
    sum_rates: np.ndarray   # [N]
    jains: np.ndarray       # [N]


@dataclass
class TrainResult:
    model: Model
    dual: DualState
    history: TrainHistory
    best_epoch: int | None    # epoch the returned parameters come from, if selected


def _check_dims(config: TrainConfig, ds: Dataset, name: str) -> None:
    mc = config.model
    if ds.config.n_t != mc.n_t:
        raise ValueError(f"{name} set has n_t={ds.config.n_t}, model expects {mc.n_t}")
    if feature_dim(ds.config.n_t) != mc.n_f:
        raise ValueError(f"{name} set features {feature_dim(ds.config.n_t)} != model n_f={mc.n_f}")
    if not ds.samples:
        raise ValueError(f"{name} set is empty")


def model_beamformers(model: Model, samples, power_per_user: float,
                      batch_size: int = 256) -> list:
    """Frozen-model inference: one BeamformerSet per sample."""
    feats = features_array(samples)
    out = []
    for lo in range(0, len(samples), batch_size):
        raw = model.forward(feats[lo:lo + batch_size]).data
        out.extend(normalize_columns(row, power_per_user) for row in raw)
    return out


def evaluate(source, dataset: Dataset, batch_size: int = 256) -> EvalSummary:
    """Evaluate a trained model or any `sample -> BeamformerSet` adapter.

    Metrics run in double precision via the `metrics` module, so a
    baseline adapter here reproduces the closed-form results exactly.
    """
    power = dataset.config.power_per_user
    if isinstance(source, Model):
        beams = model_beamformers(source, dataset.samples, power, batch_size)
    else:
        beams = [source(s) for s in dataset.samples]
    reports = [metrics.evaluate_rates(s, bf) for s, bf in zip(dataset.samples, beams)]
    rates = np.stack([r.rate for r in reports])
    sums = np.array([r.sum_rate for r in reports])
    jains = np.array([r.jain for r in reports])
    return EvalSummary(mean_sum_rate=float(sums.mean()), mean_jain=float(jains.mean()),
                       rates=rates, sum_rates=sums, jains=jains)


def train(config: TrainConfig, train_set: Dataset, val_set: Dataset,
          log=None) -> TrainResult:
    """Run the adaptive dual-multiplier loop; see the module docstring."""
    _check_dims(config, train_set, "train")
    _check_dims(config, val_set, "validation")
    power = train_set.config.power_per_user

    model = Model(config.model)
    params = model.parameters()
    optimizer = Adam(params, lr=config.lr)
    dual = DualState(lam=config.lambda0, j_lb=config.j_lb, eps=config.eps, eta=config.eta)
    feats = features_array(train_set.samples)
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()

    n_train = len(train_set.samples)
    steps_per_epoch = -(-n_train // config.batch_size)
    grad_ema = None
    best = None   # (val_sum_rate, epoch, param snapshot, dual snapshot)
    step = 0

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n_train)
        for m in range(steps_per_epoch):
            idx = perm[m * config.batch_size:(m + 1) * config.batch_size]
            raw = model.forward(Tensor(feats[idx]))
            report = batch_loss([train_set.samples[i] for i in idx], raw, power, dual)
            report.loss.backward()
            gnorm = global_grad_norm(params)
            grad_ema = gnorm if grad_ema is None else \
                config.grad_ema_decay * grad_ema + (1.0 - config.grad_ema_decay) * gnorm
            step += 1
            history.batches.append(BatchRecord(
                step=step, epoch=epoch, loss=float(report.loss.data), s_bar=report.s_bar,
                j_bar=report.j_bar, lam=dual.lam, grad_ema=grad_ema))
            dual = dual_update(dual, report.j_bar)
            optimizer.step()
            optimizer.zero_grad()

        val = evaluate(model, val_set, batch_size=config.batch_size)
        history.epochs.append(EpochRecord(epoch=epoch, val_sum_rate=val.mean_sum_rate,
                                          val_jain=val.mean_jain))
        feasible = abs(val.mean_jain - config.j_lb) <= config.eps
        if feasible and (best is None or val.mean_sum_rate > best[0]):
            best = (val.mean_sum_rate, epoch, [p.data.copy() for p in params], dual)
        if log is not None:
            log(f"epoch {epoch:3d}  val_sum_rate={val.mean_sum_rate:8.4f}  "
                f"val_jain={val.mean_jain:.4f}  lambda={dual.lam:.4f}  "
                f"grad_ema={grad_ema:.3e}")
        if feasible and grad_ema <= config.grad_tol:
            break

    best_epoch = None
    if best is not None:
        best_epoch = best[1]
        for p, snap in zip(params, best[2]):
            p.data = snap
        dual = best[3]
    return TrainResult(model=model, dual=dual, history=history, best_epoch=best_epoch)


# ---- checkpoint persistence -------------------------------------------------


def _ckpt_sidecar(path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(path, model: Model, dual: DualState, provenance: dict | None = None) -> None:
    """Binary parameter dump (declaration order, little-endian float32) + JSON sidecar."""
    path = Path(path)
    cfg = model.config
    params = model.parameters()
    n_params = sum(p.data.size for p in params)
    blob = bytearray()
    blob += _CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, cfg.n_f, cfg.d_model,
                              cfg.n_att, cfg.n_head, cfg.n_t, cfg.init_seed, n_params)
    for p in params:
        blob += np.ascontiguousarray(p.data, dtype="<f4").tobytes()
    path.write_bytes(blob)
    sidecar = {
        "format_version": CHECKPOINT_VERSION,
        "created": datetime.now(timezone.utc).isoformat(),
        "model_config": asdict(cfg),
        "dual": asdict(dual),
        "provenance": provenance or {},
    }
    _ckpt_sidecar(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_checkpoint(path):
    """Returns (model, dual, provenance); parameters round-trip bit-exactly."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise CheckpointFormatError(f"file too short for a {_CKPT_HEADER.size}-byte header")
    magic, version, n_f, d_model, n_att, n_head, n_t, init_seed, n_params = \
        _CKPT_HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version > CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"checkpoint version {version} is newer than supported version {CHECKPOINT_VERSION}")
    expected = _CKPT_HEADER.size + 4 * n_params
    if len(raw) != expected:
        raise CheckpointFormatError(
            f"expected {expected} bytes for {n_params} parameters, file has {len(raw)}")
    config = ModelConfig(n_f=n_f, d_model=d_model, n_att=n_att, n_head=n_head,
                         n_t=n_t, init_seed=init_seed)
    model = Model(config)
    off = _CKPT_HEADER.size
    for p in model.parameters():
        count = p.data.size
        flat = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        p.data = flat.reshape(p.data.shape).astype(np.float32)
        off += 4 * count
    side = _ckpt_sidecar(path)
    if not side.exists():
        raise CheckpointFormatError(f"missing checkpoint sidecar {side}")
    meta = json.loads(side.read_text())
    dual = DualState(**meta["dual"])
    return model, dual, meta.get("provenance", {})
