"""Decomposition-quality metrics from histogram entropy estimates.

Both metrics reduce to one- and two-dimensional differential entropies
estimated by Riemann sums over histograms:

* mutual information reduction: ``log2|det W| + sum h(x_i) - sum h(y_i)``
  with ``y = W x`` — total mutual information removed by an unmixing matrix;
* pairwise mutual information: ``h(x_i) + h(x_j) - h(x_i, x_j)`` for every
  channel pair, plus the mean over the strict upper triangle as a scalar.

Entropies are reported in bits. Histogram density is count / (T * width),
which integrates to one by construction. Empty bins contribute zero.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .recording import Recording, SpheringTransform, remove_epoch_means

LN2 = math.log(2.0)


@dataclass(frozen=True)
class HistogramSpec:
    """Binning configuration for entropy estimation.

    ``robust`` ranges clip to the 0.1%/99.9% quantiles so isolated outliers
    do not stretch the bins; ``min-max`` uses the full data range.
    """

    n_bins_marginal: int = 512
    n_bins_joint: int = 64
    range_policy: str = "robust"  # "robust" | "min-max"

    def __post_init__(self) -> None:
        if self.n_bins_marginal < 2 or self.n_bins_joint < 2:
            raise DataError("histogram needs at least 2 bins per axis")
        if self.range_policy not in ("robust", "min-max"):
            raise DataError(f"unknown range_policy {self.range_policy!r}")


@dataclass(frozen=True)
class EntropyEstimate:
    value: float  # bits
    n_samples: int
    spec: HistogramSpec


@dataclass(frozen=True)
class MirValue:
    """Mutual information reduction in bits/sample and kilobits/second."""

    bits_per_sample: float
    kbits_per_second: float


@dataclass(frozen=True)
class PmiMatrix:
    """Symmetric pairwise mutual information matrix in bits.

    ``aggregate`` is the mean of the strictly-upper-triangular entries with
    small negative estimates clamped to zero. The diagonal is zero by
    convention.
    """

    matrix: np.ndarray
    aggregate: float
    sample_rate_hz: float

    @property
    def aggregate_kbps(self) -> float:
        return self.aggregate * self.sample_rate_hz / 1000.0


@dataclass
class MetricTrace:
    """A metric as a function of iteration (or any sweep parameter)."""

    iterations: list[int]
    values: list[float]

    def __len__(self) -> int:
        return len(self.iterations)


def _hist_range(x: np.ndarray, policy: str) -> tuple[float, float]:
    if policy == "robust":
        lo, hi = np.quantile(x, [0.001, 0.999])
        if hi > lo:
            return float(lo), float(hi)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise DataError("degenerate distribution: all values identical")
    return lo, hi


def _check_vector(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise DataError(f"need at least 2 samples, got {x.size}")
    if not np.isfinite(x).all():
        raise DataError("input contains non-finite values")
    return x


def _entropy_from_counts(counts: np.ndarray, total: int, log2_cell: float) -> float:
    p = counts[counts > 0] / total
    # fsum gives the correctly-rounded sum, so the estimate does not depend
    # on bin enumeration order.
    return -math.fsum(p * np.log2(p)) + log2_cell


def marginal_entropy(x: np.ndarray, spec: HistogramSpec | None = None) -> EntropyEstimate:
    """Histogram estimate of the differential entropy of ``x``, in bits."""
    spec = spec or HistogramSpec()
    x = _check_vector(x)
    if x.size < spec.n_bins_marginal:
        warnings.warn(
            f"only {x.size} samples for {spec.n_bins_marginal} bins; "
            "entropy estimate will be unreliable",
            stacklevel=2,
        )
    lo, hi = _hist_range(x, spec.range_policy)
    b = spec.n_bins_marginal
    counts, _ = np.histogram(np.clip(x, lo, hi), bins=b, range=(lo, hi))
    h = _entropy_from_counts(counts, x.size, math.log2((hi - lo) / b))
    return EntropyEstimate(value=h, n_samples=x.size, spec=spec)


def joint_entropy(x: np.ndarray, y: np.ndarray,
                  spec: HistogramSpec | None = None) -> EntropyEstimate:
    """Two-dimensional histogram estimate of ``h(x, y)``, in bits."""
    spec = spec or HistogramSpec()
    x, y = _check_vector(x), _check_vector(y)
    if x.size != y.size:
        raise DataError(f"length mismatch: {x.size} vs {y.size}")
    lox, hix = _hist_range(x, spec.range_policy)
    loy, hiy = _hist_range(y, spec.range_policy)
    b = spec.n_bins_joint
    counts, _, _ = np.histogram2d(
        np.clip(x, lox, hix), np.clip(y, loy, hiy),
        bins=b, range=[[lox, hix], [loy, hiy]],
    )
    cell = math.log2((hix - lox) / b) + math.log2((hiy - loy) / b)
    h = _entropy_from_counts(counts.ravel(), x.size, cell)
    return EntropyEstimate(value=h, n_samples=x.size, spec=spec)


def pairwise_mi(sources: np.ndarray, spec: HistogramSpec | None = None,
                sample_rate_hz: float = 1000.0) -> PmiMatrix:
    """Mutual information between every pair of rows of ``sources``.

    Each entry is ``h(x_i) + h(x_j) - h(x_i, x_j)``; the matrix is computed
    once per unordered pair, so it is exactly symmetric.
    """
    spec = spec or HistogramSpec()
    src = np.asarray(sources, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] < 2:
        raise DataError(f"need an n x T matrix with n >= 2, got shape {src.shape}")
    n = src.shape[0]
    h = [marginal_entropy(src[i], spec).value for i in range(n)]
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            mi = h[i] + h[j] - joint_entropy(src[i], src[j], spec).value
            mat[i, j] = mi
            mat[j, i] = mi
    upper = mat[np.triu_indices(n, k=1)]
    aggregate = float(np.mean(np.maximum(upper, 0.0)))
    return PmiMatrix(matrix=mat, aggregate=aggregate, sample_rate_hz=sample_rate_hz)


def _canonical_logabsdet(w: np.ndarray) -> float:
    # Row order is canonicalized first so permuted unmixing matrices produce
    # bit-identical log|det| values.
    order = np.lexsort(w[:, ::-1].T)
    sign, logdet = np.linalg.slogdet(w[order])
    if sign == 0 or not np.isfinite(logdet):
        raise DataError("unmixing matrix is singular")
    return float(logdet)


def _marginal_entropy_sum(rows: np.ndarray, spec: HistogramSpec) -> float:
    return math.fsum(marginal_entropy(rows[i], spec).value for i in range(rows.shape[0]))


def _mir_bits(x: np.ndarray, unmix: np.ndarray, spec: HistogramSpec,
              h_x_sum: float) -> float:
    y = unmix @ x
    return _canonical_logabsdet(unmix) / LN2 + h_x_sum - _marginal_entropy_sum(y, spec)


def mir(x: np.ndarray, unmix: np.ndarray, spec: HistogramSpec | None = None,
        sample_rate_hz: float = 1000.0) -> MirValue:
    """Mutual information reduction achieved by applying ``unmix`` to ``x``.

    Invariant to row permutation of ``unmix`` exactly, and to per-row scaling
    up to estimator noise.
    """
    spec = spec or HistogramSpec()
    x = np.asarray(x, dtype=np.float64)
    unmix = np.asarray(unmix, dtype=np.float64)
    if x.ndim != 2 or unmix.shape != (x.shape[0], x.shape[0]):
        raise DataError(
            f"shape mismatch: data {x.shape}, unmixing matrix {unmix.shape}"
        )
    bits = _mir_bits(x, unmix, spec, _marginal_entropy_sum(x, spec))
    return MirValue(bits_per_sample=bits,
                    kbits_per_second=bits * sample_rate_hz / 1000.0)


def _composite_checkpoints(checkpoints, sphering: SpheringTransform):
    for iteration, w in checkpoints:
        yield int(iteration), np.asarray(w, dtype=np.float64) @ sphering.matrix


def mir_trace(checkpoints, sphering: SpheringTransform, rec: Recording,
              spec: HistogramSpec | None = None) -> MetricTrace:
    """MIR at every checkpoint, using the composite transform W @ S applied
    to the epoch-mean-removed sensor data.

    ``checkpoints`` is a list of (iteration, W) pairs. The sensor-side
    marginal entropies are computed once and shared across checkpoints.
    """
    spec = spec or HistogramSpec()
    if not checkpoints:
        raise DataError("no checkpoints given")
    x = remove_epoch_means(rec).data
    h_x_sum = _marginal_entropy_sum(x, spec)
    iters, values = [], []
    for iteration, composite in _composite_checkpoints(checkpoints, sphering):
        iters.append(iteration)
        values.append(_mir_bits(x, composite, spec, h_x_sum))
    return MetricTrace(iterations=iters, values=values)


def pmi_trace(checkpoints, sphering: SpheringTransform, rec: Recording,
              spec: HistogramSpec | None = None) -> MetricTrace:
    """Aggregate pairwise MI of the unmixed sources at every checkpoint."""
    spec = spec or HistogramSpec()
    if not checkpoints:
        raise DataError("no checkpoints given")
    x = remove_epoch_means(rec).data
    iters, values = [], []
    for iteration, composite in _composite_checkpoints(checkpoints, sphering):
        y = composite @ x
        iters.append(iteration)
        values.append(pairwise_mi(y, spec, rec.sample_rate_hz).aggregate)
    return MetricTrace(iterations=iters, values=values)


def write_trace_csv(path: str | Path, mir_tr: MetricTrace, pmi_tr: MetricTrace,
                    sample_rate_hz: float) -> None:
    """Export aligned MIR/PMI traces as ``iteration,mir_bits,mir_kbps,pmi_bits``."""
    if mir_tr.iterations != pmi_tr.iterations:
        raise DataError("MIR and PMI traces cover different iterations")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mir_bits", "mir_kbps", "pmi_bits"])
        for it, mv, pv in zip(mir_tr.iterations, mir_tr.values, pmi_tr.values):
            writer.writerow([it, repr(mv), repr(mv * sample_rate_hz / 1000.0), repr(pv)])


def read_trace_csv(path: str | Path) -> tuple[MetricTrace, MetricTrace]:
    """Inverse of :func:`write_trace_csv`; returns (mir_trace, pmi_trace)."""
    path = Path(path)
    iters: list[int] = []
    mir_vals: list[float] = []
    pmi_vals: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "iteration":
            raise DataError(f"not a metric trace csv: {path}")
        for row in reader:
            iters.append(int(row[0]))
            mir_vals.append(float(row[1]))
            pmi_vals.append(float(row[3]))
    return (MetricTrace(iterations=list(iters), values=mir_vals),
            MetricTrace(iterations=list(iters), values=pmi_vals))
