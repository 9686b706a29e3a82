"""Crafting of maximal-influence values against element-wise aggregators.

Each scheme computes, per model coordinate, the smallest value that a group
of coordinating malicious agents can all report to push the receiver's
aggregate as far as possible without being rejected:

* large value: a fixed constant, the limiting strategy against the mean;
* trimmed-mean targeting: just below the lowest order statistic that the
  trim removes, so every malicious copy is kept at the largest surviving
  position;
* M-estimator targeting: the argmax of the influence function, mapped
  through the defender's robust location/scale estimates, corrected for
  the shift those injected values themselves cause.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .estimators import (
    MAD_NORMALIZATION,
    AggregatorKind,
    M_ESTIMATOR_KINDS,
    TRIM_ALPHA_95,
    trim_count,
)

DEFAULT_LV_MAGNITUDE = 1000.0
# Boundary offsets scale with the benign spread; the +1 guards tiny spreads.
DEFAULT_EPSILON_SCALE = 1e-6
# Relative inward margin on the influence-peak residual: placing a value on
# the exact rejection boundary would leave inclusion to float rounding.
BOUNDARY_MARGIN = 1e-9
# The shift correction is re-applied until self-consistent; the first
# application is already a fixed point except when the injected copies'
# deviation interleaves the combined MAD ranks (small-sample tail cases).
SHIFT_CORRECTION_MAX_ROUNDS = 64
SHIFT_CORRECTION_RTOL = 1e-9


class AttackKind(enum.Enum):
    LARGE_VALUE = "large_value"
    TRIMMED_SCM = "trimmed_scm"
    TALWAR_SCM = "talwar_scm"
    TUKEY_SCM = "tukey_scm"


_SCM_TARGET = {
    AttackKind.TALWAR_SCM: AggregatorKind.TALWAR,
    AttackKind.TUKEY_SCM: AggregatorKind.TUKEY,
}


@dataclass(frozen=True)
class AttackSpec:
    """Choice of attack scheme plus its parameters.

    ``target_alpha``/``target_c`` must match the tuning of the aggregator
    under attack.  ``epsilon`` overrides the spread-scaled boundary offset
    of the trimmed-mean attack when set.
    """

    kind: AttackKind
    lv_magnitude: float = DEFAULT_LV_MAGNITUDE
    target_alpha: float = TRIM_ALPHA_95
    target_c: float = 0.0
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.lv_magnitude):
            raise ValueError("lv_magnitude must be finite")
        if self.kind is AttackKind.TRIMMED_SCM and not 0.0 <= self.target_alpha < 0.5:
            raise ValueError(f"target_alpha must lie in [0, 0.5), got {self.target_alpha}")
        if self.kind in _SCM_TARGET and self.target_c <= 0.0:
            raise ValueError("target_c must be positive for M-estimator attacks")
        if self.epsilon is not None and self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")

    @property
    def label(self) -> str:
        return self.kind.value

    @staticmethod
    def large_value(magnitude: float = DEFAULT_LV_MAGNITUDE) -> "AttackSpec":
        return AttackSpec(AttackKind.LARGE_VALUE, lv_magnitude=magnitude)

    @staticmethod
    def trimmed_scm(alpha: float = TRIM_ALPHA_95, epsilon: float | None = None) -> "AttackSpec":
        return AttackSpec(AttackKind.TRIMMED_SCM, target_alpha=alpha, epsilon=epsilon)

    @staticmethod
    def talwar_scm(c: float) -> "AttackSpec":
        return AttackSpec(AttackKind.TALWAR_SCM, target_c=c)

    @staticmethod
    def tukey_scm(c: float) -> "AttackSpec":
        return AttackSpec(AttackKind.TUKEY_SCM, target_c=c)


@dataclass(frozen=True, eq=False)
class CraftingContext:
    """What an omniscient attacker knows when targeting one receiver.

    ``benign_values`` holds the current benign weight vectors visible in the
    receiver's neighborhood, one row per benign agent; ``malicious_count``
    is the number of malicious agents in that neighborhood, all of which
    will report the crafted vector.
    """

    benign_values: np.ndarray
    malicious_count: int

    def __post_init__(self) -> None:
        a = np.asarray(self.benign_values, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] == 0:
            raise ValueError("benign_values must be a non-empty (agents, dim) array")
        if not np.isfinite(a).all():
            raise ValueError("benign_values contains non-finite entries")
        if self.malicious_count < 1:
            raise ValueError("malicious_count must be at least 1")
        object.__setattr__(self, "benign_values", a)

    @property
    def dim(self) -> int:
        return self.benign_values.shape[1]


def psi_argmax(kind: AggregatorKind, c: float) -> float:
    """Residual value at which the influence function peaks: c, or c/sqrt(5)."""
    if kind not in M_ESTIMATOR_KINDS:
        raise ValueError(f"psi_argmax is defined for Talwar/Tukey only, got {kind}")
    if c <= 0.0:
        raise ValueError("tuning constant c must be positive")
    if kind is AggregatorKind.TALWAR:
        return c
    return c / math.sqrt(5.0)


def trimmed_attack_values(
    benign, malicious_count: int, alpha: float, epsilon: float | None = None
) -> np.ndarray:
    """Per-coordinate value just below the trim-survival boundary.

    With N_k = n_benign + malicious_count received vectors, the defender
    discards t = floor(alpha*N_k) per side.  Reporting just below the
    (n_benign - t + 1)-th ascending benign value leaves exactly the top t
    benign values above the copies: the trim removes those, every malicious
    copy survives at the largest surviving position, and no higher
    placement keeps all copies.  When t = 0 nothing is trimmed and the
    largest benign value serves as the stealth boundary instead.
    """
    a = np.asarray(benign, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    n_benign = a.shape[0]
    if malicious_count < 0:
        raise ValueError("malicious_count must be non-negative")
    t = trim_count(n_benign + malicious_count, alpha)
    if n_benign - t < 1:
        raise ValueError("trim boundary exceeds the benign neighborhood")
    s = np.sort(a, axis=0)
    boundary = s[n_benign - t] if t >= 1 else s[n_benign - 1]
    if epsilon is None:
        eps = DEFAULT_EPSILON_SCALE * (1.0 + (s[-1] - s[0]))
    else:
        eps = np.full(a.shape[1], float(epsilon))
    return boundary - eps


def mestimator_attack_values(
    benign, malicious_count: int, kind: AggregatorKind, c: float
) -> np.ndarray:
    """Per-coordinate peak-influence value against a Talwar/Tukey defender.

    Stage one places the value at the influence peak seen through the benign
    median and normalized MAD; stage two recomputes both on the benign set
    plus the provisionally injected copies, accounting for the shift the
    injection itself causes.  The correction is repeated until the placement
    is self-consistent, which the first application almost always already
    is: the copies sit well above the median and MAD ranks, so re-adding
    them at the corrected value leaves both statistics unchanged.  The peak
    residual is backed off by a relative ``BOUNDARY_MARGIN`` so that the
    Talwar copies survive the defender's hard |r| <= c cutoff under float
    rounding.  A zero scale collapses to the median, the only undetectable
    choice there.
    """
    a = np.asarray(benign, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if malicious_count < 0:
        raise ValueError("malicious_count must be non-negative")
    c0 = psi_argmax(kind, c) * (1.0 - BOUNDARY_MARGIN)
    med = np.median(a, axis=0)
    scale = MAD_NORMALIZATION * np.median(np.abs(a - med), axis=0)
    z = c0 * scale + med
    if malicious_count == 0:
        return z
    for _ in range(SHIFT_CORRECTION_MAX_ROUNDS):
        combined = np.concatenate(
            [a, np.broadcast_to(z, (malicious_count, a.shape[1]))], axis=0
        )
        med2 = np.median(combined, axis=0)
        scale2 = MAD_NORMALIZATION * np.median(np.abs(combined - med2), axis=0)
        z_next = c0 * scale2 + med2
        drift = np.abs(z_next - z) <= SHIFT_CORRECTION_RTOL * (1.0 + np.abs(z))
        z = z_next
        if drift.all():
            break
    return z


def craft_large_value(ctx: CraftingContext, spec: AttackSpec) -> np.ndarray:
    return np.full(ctx.dim, spec.lv_magnitude)


def craft_trimmed_scm(ctx: CraftingContext, spec: AttackSpec) -> np.ndarray:
    return trimmed_attack_values(
        ctx.benign_values, ctx.malicious_count, spec.target_alpha, spec.epsilon
    )


def craft_mestimator_scm(ctx: CraftingContext, spec: AttackSpec) -> np.ndarray:
    return mestimator_attack_values(
        ctx.benign_values, ctx.malicious_count, _SCM_TARGET[spec.kind], spec.target_c
    )


def craft_attack(ctx: CraftingContext, spec: AttackSpec) -> np.ndarray:
    """Craft the vector every malicious neighbor reports to this receiver."""
    if spec.kind is AttackKind.LARGE_VALUE:
        return craft_large_value(ctx, spec)
    if spec.kind is AttackKind.TRIMMED_SCM:
        return craft_trimmed_scm(ctx, spec)
    return craft_mestimator_scm(ctx, spec)
