"""Synthetic ground-truth data for desk-scale verification.

Generates independent sources with known densities, mixes them through a
random well-conditioned matrix, and scores recovered unmixing matrices with
the Amari index (0 = perfect up to scale and permutation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .recording import Recording, save_recording

SOURCE_KINDS = ("laplacian", "uniform", "gaussian", "gg", "mixture-of-two-gaussians")

MAX_CONDITION = 100.0
_MAX_DRAWS = 100


@dataclass(frozen=True)
class SourceSpec:
    """One source's distribution: kind plus scale (and shape for ``gg``)."""

    kind: str
    scale: float = 1.0
    rho: float | None = None  # generalized-Gaussian shape, "gg" only

    def __post_init__(self) -> None:
        if self.kind not in SOURCE_KINDS:
            raise DataError(f"unknown source kind {self.kind!r}; one of {SOURCE_KINDS}")
        if self.scale <= 0:
            raise DataError(f"scale must be positive, got {self.scale}")
        if self.kind == "gg":
            if self.rho is None or self.rho <= 0:
                raise DataError("gg sources need a positive rho")
        elif self.rho is not None:
            raise DataError(f"rho only applies to gg sources, not {self.kind!r}")


@dataclass(frozen=True)
class GroundTruth:
    """Known mixing matrix and sources behind a synthetic recording."""

    mixing: np.ndarray
    sources: np.ndarray
    seed: int


def _draw_source(rng: np.random.Generator, spec: SourceSpec, n: int) -> np.ndarray:
    s = spec.scale
    if spec.kind == "laplacian":
        return rng.laplace(0.0, s, n)
    if spec.kind == "uniform":
        return rng.uniform(-s, s, n)
    if spec.kind == "gaussian":
        return rng.normal(0.0, s, n)
    if spec.kind == "gg":
        # |x| = s * G**(1/rho) with G ~ Gamma(1/rho) gives density
        # proportional to exp(-|x/s|**rho).
        mag = s * rng.gamma(1.0 / spec.rho, 1.0, n) ** (1.0 / spec.rho)
        return mag * rng.choice([-1.0, 1.0], n)
    # mixture-of-two-gaussians: equal-weight modes at +/- 1.5 s, sd s/2
    signs = rng.choice([-1.0, 1.0], n)
    return 1.5 * s * signs + rng.normal(0.0, 0.5 * s, n)


def generate(n: int, t: int, specs: list[SourceSpec], seed: int, *,
             mixing: np.ndarray | None = None, epoch_len: int = 1,
             sample_rate_hz: float = 250.0) -> tuple[GroundTruth, Recording]:
    """Draw independent sources per spec and mix them.

    The mixing matrix has uniform entries, redrawn until its condition
    number is at most 100; pass ``mixing`` explicitly (e.g. the identity) to
    skip the random draw. Deterministic per seed.
    """
    if n < 2:
        raise DataError(f"need at least 2 sources, got {n}")
    if t < n * n:
        raise DataError(f"need at least n^2 = {n * n} samples, got {t}")
    if len(specs) != n:
        raise DataError(f"{len(specs)} source specs for {n} sources")
    rng = np.random.default_rng(seed)
    if mixing is None:
        for _ in range(_MAX_DRAWS):
            cand = rng.uniform(-1.0, 1.0, (n, n))
            if np.linalg.cond(cand) <= MAX_CONDITION:
                mixing = cand
                break
        else:
            raise NumericalError(
                f"no mixing matrix with condition <= {MAX_CONDITION} in "
                f"{_MAX_DRAWS} draws"
            )
    else:
        mixing = np.asarray(mixing, dtype=np.float64)
        if mixing.shape != (n, n):
            raise DataError(f"mixing matrix shape {mixing.shape}, expected {(n, n)}")
        if np.linalg.cond(mixing) > MAX_CONDITION:
            raise DataError(f"mixing matrix condition exceeds {MAX_CONDITION}")
    sources = np.stack([_draw_source(rng, spec, t) for spec in specs])
    rec = Recording(data=mixing @ sources, sample_rate_hz=sample_rate_hz,
                    epoch_len=epoch_len)
    return GroundTruth(mixing=mixing, sources=sources, seed=seed), rec


def amari_index(p: np.ndarray) -> float:
    """Permutation/scale-invariant distance of ``p`` from a scaled permutation.

    Zero iff every row and column has a single nonzero entry; normalized so
    the all-ones matrix scores 1.
    """
    p = np.abs(np.asarray(p, dtype=np.float64))
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DataError(f"need a square matrix, got shape {p.shape}")
    if not np.isfinite(p).all():
        raise DataError("matrix contains non-finite values")
    n = p.shape[0]
    row_max = p.max(axis=1)
    col_max = p.max(axis=0)
    if np.any(row_max == 0) or np.any(col_max == 0):
        raise DataError("matrix has an all-zero row or column")
    rows = ((p.sum(axis=1) / row_max - 1.0) / (n - 1)).sum()
    cols = ((p.sum(axis=0) / col_max - 1.0) / (n - 1)).sum()
    return float((rows + cols) / (2 * n))


def save_ground_truth(out_dir: str | Path, name: str, gt: GroundTruth,
                      rec: Recording, specs: list[SourceSpec]) -> Path:
    """Persist mixed recording (raw-f32 + sidecar) and ``<name>_truth.json``
    holding the mixing matrix and source specs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_recording(out_dir / f"{name}.f32", rec)
    truth = {
        "seed": gt.seed,
        "mixing": gt.mixing.tolist(),
        "specs": [
            {"kind": s.kind, "scale": s.scale, **({"rho": s.rho} if s.rho else {})}
            for s in specs
        ],
    }
    path = out_dir / f"{name}_truth.json"
    path.write_text(json.dumps(truth, indent=2) + "\n")
    return path
