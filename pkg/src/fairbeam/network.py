"""Set-transformer beamforming network and its optimizer.

Tokens are users: an affine embedding lifts each CSI feature row to the
model width, a stack of pre-layer-norm encoder blocks (multi-head
attention over the user axis, then a position-wise affine with a
rectifier, residuals around both) mixes them, and a shared affine head
regresses a quasi-beamformer of 2*N_t reals per user. There is no
positional encoding and no dropout: users form a set, so the whole map
is permutation-equivariant and deterministic.

The model width is the embedding factor times the feature length
(factor 4 -> d_model = 4 * N_f), giving head dimension N_f with 4 heads.
"""

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, parameter
from .metrics import BeamformerSet

EMBED_FACTOR = 4
LAYER_NORM_EPS = 1e-5
DEAD_ROW_NORM = 1e-12


class EventCounter:
    """Counts recoverable numerical fallbacks so training never crashes silently."""

    def __init__(self, name: str):
        self.name = name
        self.count = 0

    def bump(self, n: int = 1) -> None:
        self.count += n

    def reset(self) -> None:
        self.count = 0


dead_row_events = EventCounter("dead beamformer rows replaced by e1")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; the parameter count is a pure function of these."""

    n_f: int              # input feature length, 2*N_t + 1
    d_model: int          # embedding width
    n_att: int            # encoder block count
    n_head: int           # attention heads
    n_t: int              # antennas (output dim is 2*n_t)
    init_seed: int = 0

    def __post_init__(self):
        if min(self.n_f, self.d_model, self.n_att, self.n_head, self.n_t) < 1:
            raise ValueError("all ModelConfig dimensions must be positive")
        if self.d_model % self.n_head != 0:
            raise ValueError(
                f"d_model={self.d_model} must be divisible by n_head={self.n_head}")


def default_model_config(n_t: int, n_att: int = 8, n_head: int = 4,
                         init_seed: int = 0) -> ModelConfig:
    n_f = 2 * n_t + 1
    return ModelConfig(n_f=n_f, d_model=EMBED_FACTOR * n_f, n_att=n_att,
                       n_head=n_head, n_t=n_t, init_seed=init_seed)


class Affine:
    """y = x @ w + b with uniform fan-in initialization."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, dtype):
        bound = 1.0 / math.sqrt(fan_in)
        self.w = parameter(rng.uniform(-bound, bound, (fan_in, fan_out)), dtype)
        self.b = parameter(rng.uniform(-bound, bound, fan_out), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return x.matmul(self.w) + self.b

    def parameters(self):
        return [self.w, self.b]


class LayerNorm:
    def __init__(self, dim: int, dtype):
        self.gain = parameter(np.ones(dim), dtype)
        self.bias = parameter(np.zeros(dim), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + LAYER_NORM_EPS).sqrt() * self.gain + self.bias

    def parameters(self):
        return [self.gain, self.bias]


class MultiHeadAttention:
    """Scaled dot-product attention over the user axis, heads in parallel."""

    def __init__(self, d_model: int, n_head: int, rng: np.random.Generator, dtype):
        self.n_head = n_head
        self.d_head = d_model // n_head
        self.wq = Affine(d_model, d_model, rng, dtype)
        self.wk = Affine(d_model, d_model, rng, dtype)
        self.wv = Affine(d_model, d_model, rng, dtype)
        self.wo = Affine(d_model, d_model, rng, dtype)

    def _split(self, x: Tensor) -> Tensor:
        # [..., n_u, d_model] -> [..., n_head, n_u, d_head]
        new_shape = x.shape[:-1] + (self.n_head, self.d_head)
        return x.reshape(new_shape).swapaxes(-3, -2)

    def project(self, x: Tensor) -> Tensor:
        q, k, v = self._split(self.wq(x)), self._split(self.wk(x)), self._split(self.wv(x))
        scores = q.matmul(k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.d_head))
        mixed = scores.softmax(axis=-1).matmul(v)
        merged = mixed.swapaxes(-3, -2).reshape(x.shape)
        return self.wo(merged)

    def __call__(self, x: Tensor, residual: Tensor | None = None) -> Tensor:
        out = self.project(x)
        return out + (x if residual is None else residual)

    def parameters(self):
        return self.wq.parameters() + self.wk.parameters() + \
            self.wv.parameters() + self.wo.parameters()


class EncoderBlock:
    """Pre-LN block: attention sublayer then position-wise affine, both residual."""

    def __init__(self, d_model: int, n_head: int, rng: np.random.Generator, dtype):
        self.ln_attn = LayerNorm(d_model, dtype)
        self.attn = MultiHeadAttention(d_model, n_head, rng, dtype)
        self.ln_fc = LayerNorm(d_model, dtype)
        self.fc = Affine(d_model, d_model, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.attn(self.ln_attn(x), residual=x)
        return x + self.fc(self.ln_fc(x)).relu()

    def parameters(self):
        return self.ln_attn.parameters() + self.attn.parameters() + \
            self.ln_fc.parameters() + self.fc.parameters()


class Model:
    """Embedding -> n_att encoder blocks -> shared regression head."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(config.init_seed)
        self.embed = Affine(config.n_f, config.d_model, rng, dtype)
        self.blocks = [EncoderBlock(config.d_model, config.n_head, rng, dtype)
                       for _ in range(config.n_att)]
        self.head = Affine(config.d_model, 2 * config.n_t, rng, dtype)

    def parameters(self):
        params = self.embed.parameters()
        for block in self.blocks:
            params += block.parameters()
        return params + self.head.parameters()

    def forward(self, batch) -> Tensor:
        """[N_b, N_u, N_f] features -> [N_b, N_u, 2*N_t] quasi-beamformers."""
        x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=self.dtype))
        if x.shape[-1] != self.config.n_f:
            raise ValueError(f"expected feature dim {self.config.n_f}, got {x.shape[-1]}")
        x = self.embed(x)
        for block in self.blocks:
            x = block(x)
        return self.head(x)

    def __call__(self, batch) -> Tensor:
        return self.forward(batch)


def count_params(config: ModelConfig) -> int:
    """Analytic learnable-parameter count for the decided block structure."""
    d = config.d_model
    affine = lambda fan_in, fan_out: fan_in * fan_out + fan_out
    block = 2 * (2 * d) + 4 * affine(d, d) + affine(d, d)
    return affine(config.n_f, d) + config.n_att * block + affine(d, 2 * config.n_t)


def normalize_rows(raw: Tensor) -> Tensor:
    """Unit-normalize the last axis, differentiably.

    Rows with norm below DEAD_ROW_NORM are replaced by the fixed e1
    direction (gradient zero) and counted, so a dead regression row can
    never inject NaNs into training.
    """
    sq = (raw * raw).sum(axis=-1, keepdims=True)
    dead = sq.data < DEAD_ROW_NORM ** 2
    if dead.any():
        dead_row_events.bump(int(dead.sum()))
        e1 = np.zeros_like(raw.data)
        e1[..., 0] = 1.0
        keep = Tensor((~dead).astype(raw.dtype))
        raw = raw * keep + Tensor(e1 * dead.astype(raw.dtype))
        sq = (raw * raw).sum(axis=-1, keepdims=True)
    return raw / sq.sqrt()


def rows_to_complex(rows: np.ndarray) -> np.ndarray:
    """[..., 2*N_t] real (re stacked before im) -> [..., N_t] complex."""
    n_t = rows.shape[-1] // 2
    return rows[..., :n_t] + 1j * rows[..., n_t:]


def normalize_columns(raw: np.ndarray, power_per_user: float) -> BeamformerSet:
    """Evaluation-side conversion of one raw output [N_u, 2*N_t] to beamformers."""
    raw = np.asarray(raw, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=-1)
    dead = norms < DEAD_ROW_NORM
    if dead.any():
        dead_row_events.bump(int(dead.sum()))
        raw = raw.copy()
        raw[dead] = 0.0
        raw[dead, 0] = 1.0
        norms = np.where(dead, 1.0, norms)
    unit = raw / norms[:, None]
    return BeamformerSet(f_tilde=rows_to_complex(unit), power_per_user=power_per_user)


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
