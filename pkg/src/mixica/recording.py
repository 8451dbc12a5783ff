"""Multichannel epoched recordings and their preprocessing transforms.

A :class:`Recording` is a channels x samples matrix with a sampling rate and
a fixed epoch length. ``epoch_len == 1`` marks continuous (un-epoched) data;
epoch-based operations then act per sample, except decimation, which selects
contiguous 350-sample blocks so that continuous data is thinned at the same
granularity as epoched data.

All operations are pure: they return new values and never mutate their
inputs. Randomized selections are deterministic functions of (input, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

# Continuous recordings are decimated in contiguous blocks of this length.
CONTINUOUS_BLOCK_LEN = 350

# Rule-of-thumb lower bound on samples/channels^2 for a trustworthy unmixing
# fit; sweeps flag grid points below it.
K_RECOMMENDED_MIN = 22.0


@dataclass
class Recording:
    """A channels x samples recording with epoch structure.

    Parameters
    ----------
    data : ndarray, shape (n_channels, n_samples)
        Signal values in arbitrary physical units.
    sample_rate_hz : float
        Sampling rate, > 0.
    epoch_len : int
        Samples per epoch; ``n_samples`` must be an exact multiple unless
        ``epoch_len == 1`` (continuous data).
    channel_labels : list of str, optional
    """

    data: np.ndarray
    sample_rate_hz: float
    epoch_len: int = 1
    channel_labels: list[str] | None = None

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if self.data.ndim != 2:
            raise DataError(f"recording data must be 2-D, got shape {self.data.shape}")
        n_ch, n_s = self.data.shape
        if n_ch < 2:
            raise DataError(f"need at least 2 channels, got {n_ch}")
        if n_s < n_ch:
            raise DataError(f"need at least n_channels samples, got {n_s} < {n_ch}")
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.epoch_len = int(self.epoch_len)
        if self.epoch_len < 1:
            raise DataError(f"epoch_len must be >= 1, got {self.epoch_len}")
        if self.epoch_len > 1 and n_s % self.epoch_len != 0:
            raise DataError(
                f"n_samples ({n_s}) is not a multiple of epoch_len ({self.epoch_len})"
            )
        if not np.isfinite(self.data).all():
            raise DataError("recording contains non-finite values")
        if self.channel_labels is not None and len(self.channel_labels) != n_ch:
            raise DataError(
                f"{len(self.channel_labels)} labels for {n_ch} channels"
            )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def n_epochs(self) -> int:
        return self.n_samples // self.epoch_len

    def epochs(self) -> np.ndarray:
        """View the data as (n_channels, n_epochs, epoch_len)."""
        return self.data.reshape(self.n_channels, self.n_epochs, self.epoch_len)


@dataclass(frozen=True)
class KStat:
    """Samples-per-weight statistic k = n_samples / n_channels**2."""

    k: float
    n_samples: int
    n_channels: int

    def below(self, threshold: float = K_RECOMMENDED_MIN) -> bool:
        return self.k < threshold


@dataclass(frozen=True)
class SpheringTransform:
    """Linear whitening map: ``matrix @ (x - means[:, None])`` has identity
    covariance and zero channel means."""

    matrix: np.ndarray
    means: np.ndarray


def compute_k(n_samples: int, n_channels: int) -> KStat:
    """Data-quantity statistic k = samples / channels^2."""
    if n_channels <= 0:
        raise DataError(f"n_channels must be positive, got {n_channels}")
    if n_samples <= 0:
        raise DataError(f"n_samples must be positive, got {n_samples}")
    return KStat(k=n_samples / (n_channels * n_channels),
                 n_samples=int(n_samples), n_channels=int(n_channels))


def recording_k(rec: Recording) -> KStat:
    return compute_k(rec.n_samples, rec.n_channels)


def load_recording(path: str | Path, format: str | None = None, *,
                   sample_rate_hz: float = 250.0,
                   epoch_len: int | None = None) -> Recording:
    """Load a recording from ``raw-f32`` or ``csv`` storage.

    raw-f32 is little-endian float32, channel-major, accompanied by a JSON
    sidecar ``<name>.json`` declaring channels, samples, sample_rate_hz,
    epoch_len, and optional labels. CSV has one column per channel, one row
    per sample, and an optional header row; it carries no metadata, so
    ``sample_rate_hz`` and ``epoch_len`` apply (``epoch_len=None`` treats the
    whole file as a single epoch).

    ``format`` is inferred from the suffix when omitted.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if format is None:
        format = {"f32": "raw-f32", "csv": "csv"}.get(path.suffix.lstrip("."), "")
    if format == "raw-f32":
        return _load_raw_f32(path)
    if format == "csv":
        return _load_csv(path, sample_rate_hz=sample_rate_hz, epoch_len=epoch_len)
    raise DataError(f"unsupported format {format!r} for {path}")


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _load_raw_f32(path: Path) -> Recording:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise DataError(f"missing metadata sidecar: {sidecar}")
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt sidecar {sidecar}: {exc}") from exc
    for key in ("channels", "samples", "sample_rate_hz", "epoch_len"):
        if key not in meta:
            raise DataError(f"sidecar {sidecar} missing field {key!r}")
    n_ch, n_s = int(meta["channels"]), int(meta["samples"])
    expected = n_ch * n_s * 4
    actual = path.stat().st_size
    if actual != expected:
        raise DataError(
            f"metadata mismatch for {path}: sidecar declares {n_ch}x{n_s} samples "
            f"({expected} bytes) but file has {actual} bytes"
        )
    raw = np.fromfile(path, dtype="<f4").reshape(n_ch, n_s)
    labels = meta.get("labels")
    return Recording(
        data=raw.astype(np.float64),
        sample_rate_hz=float(meta["sample_rate_hz"]),
        epoch_len=int(meta["epoch_len"]),
        channel_labels=list(labels) if labels is not None else None,
    )


def _load_csv(path: Path, *, sample_rate_hz: float, epoch_len: int | None) -> Recording:
    with path.open() as fh:
        first = fh.readline()
    if not first.strip():
        raise DataError(f"empty csv file: {path}")
    tokens = [t.strip() for t in first.strip().split(",")]
    labels: list[str] | None
    try:
        [float(t) for t in tokens]
        labels, skip = None, 0
    except ValueError:
        labels, skip = tokens, 1
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError as exc:
        raise DataError(f"corrupt csv {path}: {exc}") from exc
    data = arr.T  # columns are channels
    if epoch_len is None:
        epoch_len = data.shape[1]
    return Recording(data=data, sample_rate_hz=sample_rate_hz,
                     epoch_len=epoch_len, channel_labels=labels)


def save_recording(path: str | Path, rec: Recording) -> Path:
    """Write a recording as raw-f32 plus its JSON sidecar; returns the data
    file path."""
    path = Path(path)
    if path.suffix != ".f32":
        path = path.with_suffix(".f32")
    path.parent.mkdir(parents=True, exist_ok=True)
    rec.data.astype("<f4").tofile(path)
    meta = {
        "channels": rec.n_channels,
        "samples": rec.n_samples,
        "sample_rate_hz": rec.sample_rate_hz,
        "epoch_len": rec.epoch_len,
    }
    if rec.channel_labels is not None:
        meta["labels"] = list(rec.channel_labels)
    _sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


def remove_epoch_means(rec: Recording) -> Recording:
    """Subtract the per-channel mean of every epoch.

    Continuous recordings (``epoch_len == 1``) have the per-channel global
    mean removed instead; subtracting each sample's own mean would zero the
    data.
    """
    if rec.epoch_len == 1:
        centered = rec.data - rec.data.mean(axis=1, keepdims=True)
        return replace(rec, data=centered)
    ep = rec.epochs()
    centered = ep - ep.mean(axis=2, keepdims=True)
    return replace(rec, data=centered.reshape(rec.n_channels, rec.n_samples))


def sphere(rec: Recording, *, eig_rtol: float = 1e-12) -> tuple[SpheringTransform, Recording]:
    """Whiten a recording: zero channel means, identity covariance.

    Uses the symmetric inverse square root of the channel covariance.
    Eigenvalues below ``eig_rtol`` times the largest are treated as rank
    deficiency and rejected.
    """
    means = rec.data.mean(axis=1)
    xc = rec.data - means[:, None]
    cov = (xc @ xc.T) / rec.n_samples
    evals, evecs = np.linalg.eigh(cov)
    floor = eig_rtol * float(evals.max())
    deficient = int(np.sum(evals <= floor))
    if deficient > 0:
        raise DataError(
            f"covariance is rank-deficient: {deficient} of {rec.n_channels} "
            f"dimensions below tolerance"
        )
    matrix = (evecs * (1.0 / np.sqrt(evals))) @ evecs.T
    out = replace(rec, data=matrix @ xc)
    return SpheringTransform(matrix=matrix, means=means), out


def _epoch_count_for_samples(target_samples: float, epoch_len: int) -> int:
    # Round a float sample target to an integer when it is one up to fp noise,
    # so exact-multiple targets do not spill into an extra epoch.
    nearest = round(target_samples)
    if abs(target_samples - nearest) < 1e-6 * max(1.0, abs(target_samples)):
        return -(-int(nearest) // epoch_len)
    return math.ceil(target_samples / epoch_len)


def _select_epochs(rec: Recording, n_keep: int, seed: int, block_len: int) -> Recording:
    n_blocks = rec.n_samples // block_len
    if n_keep > n_blocks:
        raise DataError(
            f"cannot select {n_keep} epochs: only {n_blocks} available"
        )
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n_blocks, size=n_keep, replace=False))
    blocks = rec.data[:, : n_blocks * block_len].reshape(
        rec.n_channels, n_blocks, block_len
    )
    kept = blocks[:, idx, :].reshape(rec.n_channels, n_keep * block_len)
    return replace(rec, data=kept)


def decimate_to_k(rec: Recording, target_k: float, seed: int) -> Recording:
    """Reduce a recording to roughly ``target_k * n_channels**2`` samples by
    keeping whole epochs chosen uniformly at random without replacement.

    The epoch count is rounded up, so the result has at least the target
    number of samples. Selection is deterministic given ``seed`` and keeps
    temporal order. Continuous recordings are thinned in contiguous
    350-sample blocks.
    """
    if target_k <= 0:
        raise DataError(f"target_k must be positive, got {target_k}")
    full_k = recording_k(rec).k
    if target_k > full_k * (1 + 1e-12):
        raise DataError(
            f"target_k {target_k} exceeds available data (full k = {full_k:.4g})"
        )
    target_samples = target_k * rec.n_channels * rec.n_channels
    block_len = rec.epoch_len if rec.epoch_len > 1 else CONTINUOUS_BLOCK_LEN
    n_keep = _epoch_count_for_samples(target_samples, block_len)
    n_blocks = rec.n_samples // block_len
    n_keep = min(max(n_keep, 1), n_blocks)
    return _select_epochs(rec, n_keep, seed, block_len)


def subsample_epochs(rec: Recording, fraction: float, seed: int) -> Recording:
    """Keep ``floor(fraction * n_epochs)`` epochs, uniformly at random without
    replacement, deterministically per seed."""
    if not (0.0 < fraction <= 1.0):
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    n_epochs = rec.n_epochs
    n_keep = int(math.floor(fraction * n_epochs + 1e-9))
    if n_keep < 1:
        raise DataError(
            f"fraction {fraction} of {n_epochs} epochs leaves no data"
        )
    return _select_epochs(rec, n_keep, seed, rec.epoch_len)
