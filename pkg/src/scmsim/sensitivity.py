"""Sensitivity curves: finite-sample influence of injected outliers.

The sensitivity curve of an aggregator AGG over a base sample set Y is
N * (AGG(Y u {z, ..., z}) - AGG(Y)), with N the contaminated set size.  It
measures the bias that ``count`` coordinating agents can induce by all
reporting the value z.  ``max_sc_numeric`` locates the curve's maximum by
dense grid search plus local refinement and serves as the independent
oracle for the analytic attack constructions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .estimators import AggregatorSpec, _as_samples, aggregate_matrix, estimate, mad

# Grid arg-maxima within this slack of the maximum count as ties; the
# smallest-magnitude candidate wins, positive side on exact +/- ties.
_TIE_TOL = 1e-9


def _contaminated_columns(base: np.ndarray, outliers: np.ndarray, count: int) -> np.ndarray:
    # One column per outlier value: the base set plus `count` copies of z.
    cols = np.broadcast_to(base[:, None], (base.size, outliers.size))
    copies = np.broadcast_to(outliers, (count, outliers.size))
    return np.concatenate([cols, copies], axis=0)


def sensitivity_values(
    agg: AggregatorSpec, base, outliers, count: int = 1
) -> np.ndarray:
    """Vectorized sensitivity curve over an array of outlier values."""
    a = _as_samples(base)
    if count < 1:
        raise ValueError("outlier count must be at least 1")
    zs = np.asarray(outliers, dtype=float).ravel()
    if not np.isfinite(zs).all():
        raise ValueError("outlier values must be finite")
    n = a.size + count
    clean = estimate(agg, a)
    contaminated = aggregate_matrix(agg, _contaminated_columns(a, zs, count)).values
    return n * (contaminated - clean)


def sensitivity_curve(agg: AggregatorSpec, base, outlier: float) -> float:
    """Influence of a single added observation on the aggregate."""
    return sensitivity_curve_multi(agg, base, outlier, 1)


def sensitivity_curve_multi(
    agg: AggregatorSpec, base, outlier: float, count: int
) -> float:
    """Influence of ``count`` identical added observations on the aggregate."""
    return float(sensitivity_values(agg, base, [outlier], count)[0])


@dataclass(frozen=True, eq=False)
class SCTable:
    """Sensitivity curves of several aggregators over a shared outlier grid."""

    grid: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray  # shape (len(names), len(grid))

    def row(self, name: str) -> np.ndarray:
        return self.values[self.names.index(name)]

    def to_csv_text(self) -> str:
        lines = ["outlier_value," + ",".join(self.names)]
        for j, z in enumerate(self.grid):
            lines.append(",".join([repr(float(z))] + [repr(float(v)) for v in self.values[:, j]]))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())


def sc_sweep(
    aggs: Sequence[AggregatorSpec], base, grid, count: int = 1
) -> SCTable:
    """Evaluate the sensitivity curve of each aggregator over a value grid."""
    zs = np.asarray(grid, dtype=float).ravel()
    if zs.size == 0:
        raise ValueError("outlier grid is empty")
    if zs.size > 1 and not (np.diff(zs) > 0).all():
        raise ValueError("outlier grid must be strictly increasing")
    if not aggs:
        raise ValueError("no aggregators given")
    rows = np.vstack([sensitivity_values(agg, base, zs, count) for agg in aggs])
    return SCTable(zs.copy(), tuple(agg.label for agg in aggs), rows)


def _golden_section_max(
    f: Callable[[float], float], lo: float, hi: float, evals: int = 80
) -> tuple[float, float]:
    # Derivative-free local maximization; tracks the best evaluated point so
    # discontinuous objectives cannot lose a better endpoint.
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    best_x, best_f = lo, f(lo)
    for x in (hi,):
        fx = f(x)
        if fx > best_f:
            best_x, best_f = x, fx
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(evals):
        for x, fx in ((x1, f1), (x2, f2)):
            if fx > best_f:
                best_x, best_f = x, fx
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        if b - a <= 1e-12 * (1.0 + abs(a) + abs(b)):
            break
    return best_x, best_f


def default_search_bounds(base) -> tuple[float, float]:
    """Search window covering the redescending maxima: median +/- 10*(mad+1)."""
    a = _as_samples(base)
    center = float(np.median(a))
    halfwidth = 10.0 * (mad(a, normalized=True) + 1.0)
    return center - halfwidth, center + halfwidth


def max_sc_numeric(
    agg: AggregatorSpec,
    base,
    count: int = 1,
    search_bounds: tuple[float, float] | None = None,
    grid_points: int = 4001,
) -> tuple[float, float]:
    """Numerically maximize the sensitivity curve over the outlier value.

    Dense grid search followed by golden-section refinement around the best
    grid cell.  Among grid arg-maxima within 1e-9 of the maximum, the value
    of smallest magnitude is preferred (positive side on symmetric ties).
    Returns ``(z_star, sc_star)``.
    """
    a = _as_samples(base)
    if search_bounds is None:
        search_bounds = default_search_bounds(a)
    lo, hi = float(search_bounds[0]), float(search_bounds[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"invalid search bounds ({lo}, {hi})")
    if grid_points < 3:
        raise ValueError("grid_points must be at least 3")
    zs = np.linspace(lo, hi, grid_points)
    scs = sensitivity_values(agg, a, zs, count)
    best = float(scs.max())
    candidates = zs[scs >= best - _TIE_TOL]
    z0 = float(min(candidates, key=lambda z: (abs(z), -z)))
    sc0 = float(sensitivity_values(agg, a, [z0], count)[0])
    step = (hi - lo) / (grid_points - 1)
    z_ref, sc_ref = _golden_section_max(
        lambda z: float(sensitivity_values(agg, a, [z], count)[0]),
        max(lo, z0 - step),
        min(hi, z0 + step),
    )
    if sc_ref > sc0:
        return z_ref, sc_ref
    return z0, sc0
