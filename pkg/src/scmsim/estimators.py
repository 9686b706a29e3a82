"""Scalar robust location estimators and element-wise vector aggregation.

Every aggregation rule in this package is element-wise: an estimator of
location is applied independently to each coordinate of the exchanged
weight vectors.  The M-estimators (Talwar and biweight Tukey) are solved
by a fixed-point iteration started from the median, with the scale held
fixed at the normalized median absolute deviation of the input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

# Gaussian consistency factor: multiplies the raw MAD so it estimates the
# standard deviation of normal data.  The 95%-efficiency tuning constants
# below assume a Gaussian-consistent scale.
MAD_NORMALIZATION = 1.4826

# Tuning values at which each family reaches ~95% Gaussian efficiency.
TRIM_ALPHA_95 = 0.0688
TALWAR_C_95 = 2.7955
TUKEY_C_95 = 4.685


class AggregatorKind(enum.Enum):
    SAMPLE_MEAN = "sample_mean"
    MEDIAN = "median"
    TRIMMED_MEAN = "trimmed_mean"
    TALWAR = "talwar"
    TUKEY = "tukey"


M_ESTIMATOR_KINDS = frozenset({AggregatorKind.TALWAR, AggregatorKind.TUKEY})


@dataclass(frozen=True)
class AggregatorSpec:
    """An aggregation rule plus its tuning parameters.

    ``alpha`` is the per-side trim fraction (trimmed mean only), ``c`` the
    rejection constant of the M-estimators.  ``fixed_point_tol`` and
    ``fixed_point_max_iter`` control the M-estimation iteration.
    """

    kind: AggregatorKind
    alpha: float = 0.0
    c: float = 0.0
    fixed_point_tol: float = 1e-9
    fixed_point_max_iter: int = 100

    def __post_init__(self) -> None:
        if self.kind is AggregatorKind.TRIMMED_MEAN and not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"trim fraction must lie in [0, 0.5), got {self.alpha}")
        if self.kind in M_ESTIMATOR_KINDS:
            if self.c <= 0.0:
                raise ValueError(f"tuning constant c must be positive, got {self.c}")
            if self.fixed_point_tol <= 0.0:
                raise ValueError("fixed_point_tol must be positive")
            if self.fixed_point_max_iter < 1:
                raise ValueError("fixed_point_max_iter must be at least 1")

    @property
    def label(self) -> str:
        return self.kind.value

    @staticmethod
    def sample_mean() -> "AggregatorSpec":
        return AggregatorSpec(AggregatorKind.SAMPLE_MEAN)

    @staticmethod
    def median() -> "AggregatorSpec":
        return AggregatorSpec(AggregatorKind.MEDIAN)

    @staticmethod
    def trimmed_mean(alpha: float = TRIM_ALPHA_95) -> "AggregatorSpec":
        return AggregatorSpec(AggregatorKind.TRIMMED_MEAN, alpha=alpha)

    @staticmethod
    def talwar(c: float = TALWAR_C_95, **kw) -> "AggregatorSpec":
        return AggregatorSpec(AggregatorKind.TALWAR, c=c, **kw)

    @staticmethod
    def tukey(c: float = TUKEY_C_95, **kw) -> "AggregatorSpec":
        return AggregatorSpec(AggregatorKind.TUKEY, c=c, **kw)


def tuned_aggregators() -> list[AggregatorSpec]:
    """The five standard rules, tuned for 95% efficiency, in trace-column order."""
    return [
        AggregatorSpec.sample_mean(),
        AggregatorSpec.trimmed_mean(),
        AggregatorSpec.talwar(),
        AggregatorSpec.tukey(),
        AggregatorSpec.median(),
    ]


def _as_samples(values) -> np.ndarray:
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("sample set is empty")
    if not np.isfinite(a).all():
        raise ValueError("sample set contains non-finite values")
    return a


def sample_mean(values) -> float:
    return float(np.mean(_as_samples(values)))


def median(values) -> float:
    """Middle order statistic; midpoint of the two central ones for even sizes."""
    return float(np.median(_as_samples(values)))


def mad(values, normalized: bool = False) -> float:
    """Median absolute deviation from the median.

    With ``normalized=True`` the raw MAD is multiplied by 1.4826 so that it
    is consistent for the standard deviation under Gaussian data.
    """
    a = _as_samples(values)
    raw = float(np.median(np.abs(a - np.median(a))))
    return MAD_NORMALIZATION * raw if normalized else raw


def trim_count(n: int, alpha: float) -> int:
    """Number of samples discarded per side: floor(alpha * n)."""
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"trim fraction must lie in [0, 0.5), got {alpha}")
    return int(alpha * n)


def trimmed_mean(values, alpha: float) -> float:
    """Mean after discarding the floor(alpha*N) smallest and largest values."""
    a = _as_samples(values)
    t = trim_count(a.size, alpha)
    if a.size - 2 * t < 1:
        raise ValueError("trimming would discard every sample")
    return float(np.mean(np.sort(a)[t : a.size - t]))


def psi(kind: AggregatorKind, x, c: float):
    """Influence function ψ of the M-estimators.

    Talwar passes x through inside [-c, c] and rejects outside; biweight
    Tukey tapers as x(1 - x^2/c^2)^2 inside and rejects outside.  Accepts
    scalars or arrays.
    """
    if kind not in M_ESTIMATOR_KINDS:
        raise ValueError(f"psi is defined for Talwar/Tukey only, got {kind}")
    if c <= 0.0:
        raise ValueError("tuning constant c must be positive")
    arr = np.asarray(x, dtype=float)
    inside = np.abs(arr) <= c
    if kind is AggregatorKind.TALWAR:
        out = np.where(inside, arr, 0.0)
    else:
        out = np.where(inside, arr * (1.0 - (arr / c) ** 2) ** 2, 0.0)
    return float(out) if np.isscalar(x) else out


def _psi_weights(kind: AggregatorKind, r: np.ndarray, c: float) -> np.ndarray:
    # psi(r)/r with the limit value 1 at r = 0, for both families.
    inside = np.abs(r) <= c
    if kind is AggregatorKind.TALWAR:
        return inside.astype(float)
    u = np.where(inside, 1.0 - (r / c) ** 2, 0.0)
    return u * u


def _m_estimate_columns(
    a: np.ndarray, kind: AggregatorKind, c: float, tol: float, max_iter: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """Column-wise M-estimation on a (samples, columns) matrix.

    Returns (locations, converged flags, iterations used).  Columns with a
    zero scale estimate return the median directly.  Columns whose samples
    are all rejected keep their last iterate and are flagged non-converged.
    """
    n, m = a.shape
    med = np.median(a, axis=0)
    sigma = MAD_NORMALIZATION * np.median(np.abs(a - med), axis=0)
    loc = med.copy()
    degenerate = sigma == 0.0
    safe_sigma = np.where(degenerate, 1.0, sigma)
    done = degenerate.copy()
    all_rejected = np.zeros(m, dtype=bool)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if done.all():
            iterations -= 1
            break
        r = (a - loc) / safe_sigma
        w = _psi_weights(kind, r, c)
        wsum = w.sum(axis=0)
        dead = ~done & (wsum == 0.0)
        all_rejected |= dead
        done |= dead
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        new = (w[:, active] * a[:, active]).sum(axis=0) / wsum[active]
        step = np.abs(new - loc[active])
        loc[active] = new
        done[active[step <= tol * sigma[active]]] = True
    r = (a - loc) / safe_sigma
    residual = np.abs(psi(kind, r, c).sum(axis=0))
    converged = degenerate | (~all_rejected & (residual <= n * tol))
    return loc, converged, iterations


class MEstimate(NamedTuple):
    location: float
    converged: bool
    iterations: int


def m_estimate(values, spec: AggregatorSpec) -> MEstimate:
    """Location M-estimate: zero of sum(psi((y - mu)/sigma)).

    The scale sigma is the normalized MAD of the input and stays fixed; the
    iteration is the reweighted mean sum(w*y)/sum(w) with w = psi(r)/r,
    started from the median.  A zero scale short-circuits to the median.
    Non-convergence returns the last iterate flagged ``converged=False``.
    """
    if spec.kind not in M_ESTIMATOR_KINDS:
        raise ValueError(f"m_estimate requires a Talwar or Tukey spec, got {spec.kind}")
    a = _as_samples(values)
    loc, conv, iters = _m_estimate_columns(
        a[:, None], spec.kind, spec.c, spec.fixed_point_tol, spec.fixed_point_max_iter
    )
    return MEstimate(float(loc[0]), bool(conv[0]), iters)


class AggregationResult(NamedTuple):
    values: np.ndarray
    converged: bool


def aggregate_matrix(spec: AggregatorSpec, matrix) -> AggregationResult:
    """Apply the chosen scalar estimator to every column of ``matrix``.

    ``matrix`` has one row per received vector and one column per model
    coordinate.  ``converged`` is False only when an M-estimation column
    failed to converge.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D (vectors, coordinates) array, got ndim={a.ndim}")
    n = a.shape[0]
    if n == 0:
        raise ValueError("cannot aggregate an empty collection of vectors")
    if not np.isfinite(a).all():
        raise ValueError("aggregation input contains non-finite values")
    kind = spec.kind
    if kind is AggregatorKind.SAMPLE_MEAN:
        return AggregationResult(a.mean(axis=0), True)
    if kind is AggregatorKind.MEDIAN:
        return AggregationResult(np.median(a, axis=0), True)
    if kind is AggregatorKind.TRIMMED_MEAN:
        t = trim_count(n, spec.alpha)
        if n - 2 * t < 1:
            raise ValueError("trimming would discard every sample")
        s = np.sort(a, axis=0)
        return AggregationResult(s[t : n - t].mean(axis=0), True)
    loc, conv, _ = _m_estimate_columns(
        a, kind, spec.c, spec.fixed_point_tol, spec.fixed_point_max_iter
    )
    return AggregationResult(loc, bool(conv.all()))


def aggregate(spec: AggregatorSpec, vectors) -> np.ndarray:
    """Element-wise aggregation of equal-length weight vectors."""
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        mat = vectors
    else:
        rows = [np.asarray(v, dtype=float).ravel() for v in vectors]
        if not rows:
            raise ValueError("cannot aggregate an empty collection of vectors")
        dim = rows[0].size
        if any(r.size != dim for r in rows):
            raise ValueError("received vectors have mismatched dimensions")
        mat = np.vstack(rows)
    return aggregate_matrix(spec, mat).values


def estimate(spec: AggregatorSpec, values) -> float:
    """Apply an aggregation rule to a scalar sample set."""
    a = _as_samples(values)
    return float(aggregate_matrix(spec, a[:, None]).values[0])


class EfficiencyRow(NamedTuple):
    label: str
    variance_ratio: float
    ci_low: float
    ci_high: float


def monte_carlo_efficiency(
    specs: Sequence[AggregatorSpec],
    trials: int,
    sample_size: int,
    seed: int,
    batches: int = 20,
    chunk: int = 20000,
) -> list[EfficiencyRow]:
    """Gaussian efficiency of each estimator relative to the sample mean.

    Draws ``trials`` standard-normal samples of length ``sample_size``,
    shared across estimators, and reports var(sample mean)/var(estimator)
    with a normal-theory confidence band from ``batches`` disjoint batches.
    """
    if trials < batches:
        raise ValueError("trials must be at least the number of CI batches")
    rng = np.random.default_rng(seed)
    values = [np.empty(trials) for _ in specs]
    mean_values = np.empty(trials)
    start = 0
    while start < trials:
        stop = min(start + chunk, trials)
        draws = rng.standard_normal((sample_size, stop - start))
        mean_values[start:stop] = draws.mean(axis=0)
        for s, out in zip(specs, values):
            out[start:stop] = aggregate_matrix(s, draws).values
        start = stop
    edges = np.linspace(0, trials, batches + 1).astype(int)
    rows = []
    for s, est in zip(specs, values):
        if s.kind is AggregatorKind.SAMPLE_MEAN:
            rows.append(EfficiencyRow(s.label, 1.0, 1.0, 1.0))
            continue
        ratio = float(np.var(mean_values) / np.var(est))
        per_batch = np.array(
            [
                np.var(mean_values[lo:hi]) / np.var(est[lo:hi])
                for lo, hi in zip(edges[:-1], edges[1:])
            ]
        )
        half = 1.96 * per_batch.std(ddof=1) / np.sqrt(batches)
        rows.append(EfficiencyRow(s.label, ratio, ratio - half, ratio + half))
    return rows
