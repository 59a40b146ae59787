"""Scenario configuration, Rayleigh channel generation, CSI features, and dataset IO.

The channel model is noise-normalized: sigma_u^2 = 1 for every user and a
log-distance pathloss gamma(d) = gamma0 * (d / d_min)^(-pathloss_exponent),
with gamma0 calibrated so a user at d_min receiving the full power budget
sees `ref_snr_db`. Samples are stored in single precision; the `.fbd` file
format below round-trips them bit-exactly.

Per-sample RNG streams are derived from (seed, sample_index), so neither
generation order nor worker count can change the data.
"""

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

FORMAT_MAGIC = b"FBDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQI4x")  # magic, version, n_t, n_u, count, flags, pad


class DatasetFormatError(ValueError):
    """Raised on bad magic, unsupported version, or truncated payload."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Cell geometry, power budget, and channel-model knobs.

    carrier_hz and bandwidth_hz are provenance only: rates are reported
    in bit/s/Hz and the subcarrier bandwidth never enters the math.
    """

    n_t: int = 16
    n_u: int = 12
    p_tot: float = 10.0              # W
    radius: float = 500.0            # m
    d_min: float = 35.0              # m
    pathloss_exponent: float = 3.76
    ref_snr_db: float = 30.0         # full-power single-user SNR at d_min
    carrier_hz: float = 2e9
    bandwidth_hz: float = 15e3
    seed: int = 0

    def __post_init__(self):
        if self.n_t < 1 or self.n_u < 1:
            raise ValueError(f"need n_t >= 1 and n_u >= 1, got {self.n_t}, {self.n_u}")
        if self.p_tot <= 0:
            raise ValueError(f"p_tot must be positive, got {self.p_tot}")
        if not (0 < self.d_min < self.radius):
            raise ValueError(f"need 0 < d_min < radius, got {self.d_min}, {self.radius}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")

    @property
    def power_per_user(self) -> float:
        return self.p_tot / self.n_u

    def gamma0(self) -> float:
        """Pathloss at d_min, calibrated to ref_snr_db with sigma^2 = 1."""
        return 10.0 ** (self.ref_snr_db / 10.0) / (self.p_tot * self.n_t)


@dataclass(frozen=True, eq=False)
class ChannelSample:
    """One drop: channels [N_u, N_t] complex64, noise variances, positions."""

    h: np.ndarray          # [N_u, N_t] complex64
    sigma2: np.ndarray     # [N_u] float32
    positions: np.ndarray  # [N_u, 2] float32, meters

    def __post_init__(self):
        if np.any(np.all(self.h == 0, axis=1)):
            raise ValueError("all-zero channel row")
        if np.any(self.sigma2 <= 0):
            raise ValueError("noise variances must be positive")


@dataclass(frozen=True)
class CsiFeatureSequence:
    """Network input rows [N_u, N_f]: [Re(h/|h|), Im(h/|h|), 10*log10(snr)]."""

    rows: np.ndarray  # [N_u, 2*N_t + 1] float32


@dataclass(eq=False)
class Dataset:
    config: ScenarioConfig
    samples: list

    def __len__(self) -> int:
        return len(self.samples)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Child RNG stream for one sample index (order-independent)."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def drop_users(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Positions [N_u, 2] uniform over the annulus d_min <= d <= radius.

    Area uniformity means d^2 is uniform on [d_min^2, radius^2].
    """
    u = rng.random((config.n_u, 2))
    d = np.sqrt(config.d_min ** 2 + u[:, 0] * (config.radius ** 2 - config.d_min ** 2))
    theta = 2.0 * np.pi * u[:, 1]
    return np.stack([d * np.cos(theta), d * np.sin(theta)], axis=1)


def generate_sample(config: ScenarioConfig, rng: np.random.Generator) -> ChannelSample:
    """One Rayleigh drop: h_u = sqrt(gamma(d_u)) * g_u, g_u ~ CN(0, I)."""
    positions = drop_users(config, rng)
    d = np.linalg.norm(positions, axis=1)
    gamma = config.gamma0() * (d / config.d_min) ** (-config.pathloss_exponent)
    re = rng.standard_normal((config.n_u, config.n_t))
    im = rng.standard_normal((config.n_u, config.n_t))
    g = (re + 1j * im) / np.sqrt(2.0)
    h = np.sqrt(gamma)[:, None] * g
    return ChannelSample(
        h=h.astype(np.complex64),
        sigma2=np.ones(config.n_u, dtype=np.float32),
        positions=positions.astype(np.float32),
    )


def _generate_range(config: ScenarioConfig, lo: int, hi: int) -> list:
    return [generate_sample(config, sample_rng(config.seed, i)) for i in range(lo, hi)]


def generate_dataset(config: ScenarioConfig, n_samples: int, workers: int = 1) -> Dataset:
    """Generate `n_samples` drops; identical output for any worker count."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    if workers <= 1 or n_samples < 64:
        samples = _generate_range(config, 0, n_samples)
    else:
        bounds = np.linspace(0, n_samples, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = pool.map(_generate_range, [config] * workers, bounds[:-1], bounds[1:])
        samples = [s for chunk in chunks for s in chunk]
    return Dataset(config=config, samples=samples)


def encode_features(sample: ChannelSample) -> CsiFeatureSequence:
    """CSI feature rows: normalized channel re/im plus the log-SNR."""
    h = np.asarray(sample.h, dtype=np.complex128)
    norms = np.linalg.norm(h, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot encode an all-zero channel row")
    h_unit = h / norms[:, None]
    snr_db = 10.0 * np.log10(norms ** 2 / np.asarray(sample.sigma2, dtype=np.float64))
    rows = np.concatenate([h_unit.real, h_unit.imag, snr_db[:, None]], axis=1)
    return CsiFeatureSequence(rows=rows.astype(np.float32))


def feature_dim(n_t: int) -> int:
    return 2 * n_t + 1


def features_array(samples) -> np.ndarray:
    """Stack encode_features over samples -> [N, N_u, N_f] float32."""
    return np.stack([encode_features(s).rows for s in samples])


def split_dataset(ds: Dataset, fractions, seed: int):
    """Seed-deterministic permutation split into (train, val, test).

    Train and validation sizes are floor(fraction * N); the remainder
    goes to test, so the three parts always partition the dataset.
    """
    f_train, f_val, f_test = fractions
    if min(f_train, f_val, f_test) <= 0:
        raise ValueError(f"fractions must be positive, got {fractions}")
    if abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    n = len(ds.samples)
    n_train = int(np.floor(f_train * n + 1e-9))
    n_val = int(np.floor(f_val * n + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    return tuple(Dataset(config=ds.config, samples=[ds.samples[i] for i in idx]) for idx in parts)


def samples_equal(a: ChannelSample, b: ChannelSample) -> bool:
    return (a.h.tobytes() == b.h.tobytes()
            and a.sigma2.tobytes() == b.sigma2.tobytes()
            and a.positions.tobytes() == b.positions.tobytes())


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Bit-exact equality of config and every stored sample."""
    return (a.config == b.config and len(a.samples) == len(b.samples)
            and all(samples_equal(x, y) for x, y in zip(a.samples, b.samples)))


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_dataset(ds: Dataset, path) -> None:
    """Write the `.fbd` binary container plus its JSON config sidecar."""
    path = Path(path)
    cfg = ds.config
    blob = bytearray()
    blob += _HEADER.pack(FORMAT_MAGIC, FORMAT_VERSION, cfg.n_t, cfg.n_u, len(ds.samples), 0)
    for s in ds.samples:
        blob += np.ascontiguousarray(s.h, dtype="<c8").tobytes()
        blob += np.ascontiguousarray(s.sigma2, dtype="<f4").tobytes()
        blob += np.ascontiguousarray(s.positions, dtype="<f4").tobytes()
    path.write_bytes(blob)
    sidecar = {
        "format_version": FORMAT_VERSION,
        "created": datetime.now(timezone.utc).isoformat(),
        "n_samples": len(ds.samples),
        "config": asdict(cfg),
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_dataset(path) -> Dataset:
    """Read back a `.fbd` file; the sidecar supplies the full ScenarioConfig."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"file too short for a {_HEADER.size}-byte header")
    magic, version, n_t, n_u, count, _flags = _HEADER.unpack_from(raw)
    if magic != FORMAT_MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {FORMAT_MAGIC!r}")
    if version > FORMAT_VERSION:
        raise DatasetFormatError(
            f"file format version {version} is newer than supported version {FORMAT_VERSION}")
    side = sidecar_path(path)
    if not side.exists():
        raise DatasetFormatError(f"missing config sidecar {side}")
    config = ScenarioConfig(**json.loads(side.read_text())["config"])
    if (config.n_t, config.n_u) != (n_t, n_u):
        raise DatasetFormatError("sidecar dimensions disagree with the binary header")
    per_sample = n_u * n_t * 8 + n_u * 4 + n_u * 2 * 4
    expected = _HEADER.size + count * per_sample
    if len(raw) != expected:
        raise DatasetFormatError(
            f"expected {expected} bytes for {count} samples, file has {len(raw)}")
    samples = []
    off = _HEADER.size
    for _ in range(count):
        h = np.frombuffer(raw, dtype="<c8", count=n_u * n_t, offset=off).reshape(n_u, n_t)
        off += n_u * n_t * 8
        sigma2 = np.frombuffer(raw, dtype="<f4", count=n_u, offset=off)
        off += n_u * 4
        positions = np.frombuffer(raw, dtype="<f4", count=n_u * 2, offset=off).reshape(n_u, 2)
        off += n_u * 2 * 4
        samples.append(ChannelSample(h=h.copy(), sigma2=sigma2.copy(), positions=positions.copy()))
    return Dataset(config=config, samples=samples)


def dataset_sha256(ds: Dataset) -> str:
    """Content hash of the binary payload (header + samples), config-independent."""
    import hashlib

    digest = hashlib.sha256()
    cfg = ds.config
    digest.update(_HEADER.pack(FORMAT_MAGIC, FORMAT_VERSION, cfg.n_t, cfg.n_u, len(ds.samples), 0))
    for s in ds.samples:
        digest.update(np.ascontiguousarray(s.h, dtype="<c8").tobytes())
        digest.update(np.ascontiguousarray(s.sigma2, dtype="<f4").tobytes())
        digest.update(np.ascontiguousarray(s.positions, dtype="<f4").tobytes())
    return digest.hexdigest()
