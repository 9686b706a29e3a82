import math

import numpy as np
import pytest

from scmsim.attacks import (
    AttackKind,
    AttackSpec,
    CraftingContext,
    craft_attack,
    mestimator_attack_values,
    psi_argmax,
    trimmed_attack_values,
)
from scmsim.estimators import (
    MAD_NORMALIZATION,
    TALWAR_C_95,
    TRIM_ALPHA_95,
    TUKEY_C_95,
    AggregatorKind,
    AggregatorSpec,
    m_estimate,
    mad,
    median,
    psi,
    trim_count,
    trimmed_mean,
)
from scmsim.sensitivity import max_sc_numeric, sensitivity_curve_multi


def make_ctx(values, count):
    return CraftingContext(np.asarray(values, dtype=float), count)


class TestPsiArgmax:
    def test_talwar_peak_is_c(self):
        assert psi_argmax(AggregatorKind.TALWAR, TALWAR_C_95) == TALWAR_C_95

    def test_tukey_peak_is_c_over_sqrt5(self):
        got = psi_argmax(AggregatorKind.TUKEY, TUKEY_C_95)
        assert got == pytest.approx(TUKEY_C_95 / math.sqrt(5.0), abs=1e-12)
        assert got == pytest.approx(2.0952, abs=1e-4)
        assert psi_argmax(AggregatorKind.TUKEY, math.sqrt(5.0)) == pytest.approx(1.0)

    def test_rejects_non_m_kinds_and_bad_c(self):
        with pytest.raises(ValueError):
            psi_argmax(AggregatorKind.MEDIAN, 1.0)
        with pytest.raises(ValueError):
            psi_argmax(AggregatorKind.TALWAR, 0.0)


class TestLargeValue:
    def test_constant_vector(self):
        ctx = make_ctx(np.zeros((5, 3)), 2)
        z = craft_attack(ctx, AttackSpec.large_value(1000.0))
        np.testing.assert_allclose(z, [1000.0, 1000.0, 1000.0])

    def test_zero_magnitude_is_null_attack(self):
        ctx = make_ctx(np.ones((4, 2)), 1)
        np.testing.assert_allclose(craft_attack(ctx, AttackSpec.large_value(0.0)), 0.0)


class TestTrimmedScm:
    def test_worked_example(self):
        # benign {1..7}, P=2, alpha so that floor(alpha*9) = 1: the trim
        # removes the single largest value, so copies just below 7 survive
        # at the largest surviving position.
        z = trimmed_attack_values(np.arange(1.0, 8.0), 2, 0.12)[0]
        eps = 1e-6 * (1.0 + 6.0)
        assert z == pytest.approx(7.0 - eps, abs=1e-12)

    def test_survivors_and_upward_bias_by_enumeration(self):
        benign = np.arange(1.0, 8.0)
        z = trimmed_attack_values(benign, 2, 0.12)[0]
        received = np.concatenate([benign, [z, z]])
        t = trim_count(received.size, 0.12)
        survivors = np.sort(received)[t : received.size - t]
        assert (survivors == z).sum() == 2
        assert survivors.max() == z
        attacked = trimmed_mean(received, 0.12)
        assert attacked > trimmed_mean(benign, 0.12)

    def test_all_copies_survive_at_experiment_scale(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            n_benign = int(rng.integers(12, 28))
            count = int(rng.integers(1, 7))
            benign = rng.standard_normal(n_benign)
            z = trimmed_attack_values(benign, count, TRIM_ALPHA_95)[0]
            received = np.concatenate([benign, np.full(count, z)])
            t = trim_count(received.size, TRIM_ALPHA_95)
            survivors = np.sort(received)[t : received.size - t]
            assert (survivors == z).sum() == count

    def test_single_copy_achieves_numeric_optimum(self):
        # With one injected copy, sacrificing it to the trim only saturates
        # the curve, so the boundary placement is the global argmax.
        rng = np.random.default_rng(32)
        spec = AggregatorSpec.trimmed_mean()
        for _ in range(15):
            base = rng.standard_normal(int(rng.integers(20, 60)))
            z = trimmed_attack_values(base, 1, TRIM_ALPHA_95)[0]
            sc = sensitivity_curve_multi(spec, base, z, 1)
            _, sc_star = max_sc_numeric(spec, base, count=1)
            assert sc >= 0.99 * sc_star

    def test_boundary_error_when_trim_swallows_benign(self):
        with pytest.raises(ValueError):
            trimmed_attack_values(np.array([1.0]), 12, 0.14)

    def test_explicit_epsilon_respected(self):
        z = trimmed_attack_values(np.arange(1.0, 8.0), 2, 0.12, epsilon=0.25)[0]
        assert z == pytest.approx(6.75)


class TestMEstimatorScm:
    def test_two_stage_hand_computation(self):
        # symmetric {-1,0,1}, P=1, Tukey: stage one from median 0 and
        # normalized mad 1.4826; stage two re-centers on the 4-element set
        # whose median is 0.5 and normalized mad is again 1.4826.
        c0 = TUKEY_C_95 / math.sqrt(5.0)
        z = mestimator_attack_values(
            np.array([-1.0, 0.0, 1.0]), 1, AggregatorKind.TUKEY, TUKEY_C_95
        )[0]
        expected = c0 * MAD_NORMALIZATION + 0.5
        assert z == pytest.approx(expected, rel=1e-8)

    def test_example_achieves_99_percent_of_optimum(self):
        spec = AggregatorSpec.tukey()
        base = [-1.0, 0.0, 1.0]
        z = mestimator_attack_values(np.array(base), 1, AggregatorKind.TUKEY, spec.c)[0]
        sc = sensitivity_curve_multi(spec, base, z, 1)
        _, sc_star = max_sc_numeric(spec, base, count=1)
        assert sc >= 0.99 * sc_star

    def test_zero_count_returns_first_stage(self):
        base = np.array([-1.0, 0.0, 1.0])
        c0 = psi_argmax(AggregatorKind.TUKEY, TUKEY_C_95)
        z0 = mestimator_attack_values(base, 0, AggregatorKind.TUKEY, TUKEY_C_95)[0]
        assert z0 == pytest.approx(c0 * MAD_NORMALIZATION, rel=1e-8)

    def test_degenerate_scale_falls_back_to_median(self):
        z = mestimator_attack_values(
            np.array([5.0, 5.0, 5.0, 5.0]), 2, AggregatorKind.TALWAR, TALWAR_C_95
        )[0]
        assert z == pytest.approx(5.0)

    def test_shift_correction_is_a_fixed_point(self):
        rng = np.random.default_rng(33)
        for _ in range(100):
            n = int(rng.integers(5, 51))
            p = int(rng.integers(1, max(2, n // 2 + 1)))
            base = rng.standard_normal(n)
            for kind, c in ((AggregatorKind.TALWAR, TALWAR_C_95), (AggregatorKind.TUKEY, TUKEY_C_95)):
                z = mestimator_attack_values(base, p, kind, c)[0]
                c0 = psi_argmax(kind, c) * (1.0 - 1e-9)
                combined = np.concatenate([base, np.full(p, z)])
                z_again = c0 * mad(combined, normalized=True) + median(combined)
                assert abs(z_again - z) <= 1e-9 * (1.0 + abs(z))

    def test_tukey_copies_never_rejected(self):
        rng = np.random.default_rng(34)
        spec = AggregatorSpec.tukey()
        for _ in range(100):
            n = int(rng.integers(5, 51))
            p = int(rng.integers(1, max(2, n // 3 + 1)))
            base = rng.standard_normal(n)
            z = mestimator_attack_values(base, p, AggregatorKind.TUKEY, spec.c)[0]
            combined = np.concatenate([base, np.full(p, z)])
            loc = m_estimate(combined, spec).location
            sigma = mad(combined, normalized=True)
            assert psi(AggregatorKind.TUKEY, (z - loc) / sigma, spec.c) != 0.0

    def test_talwar_copies_survive_on_most_draws(self):
        # The hard cutoff makes boundary placement fragile when the
        # converged location drifts below the combined median (mostly at
        # P = 1); the survival fraction is deterministic at a fixed seed.
        rng = np.random.default_rng(35)
        spec = AggregatorSpec.talwar()
        survived = 0
        total = 200
        for _ in range(total):
            n = int(rng.integers(5, 51))
            p = int(rng.integers(1, max(2, n // 3 + 1)))
            base = rng.standard_normal(n)
            z = mestimator_attack_values(base, p, AggregatorKind.TALWAR, spec.c)[0]
            combined = np.concatenate([base, np.full(p, z)])
            loc = m_estimate(combined, spec).location
            sigma = mad(combined, normalized=True)
            if psi(AggregatorKind.TALWAR, (z - loc) / sigma, spec.c) != 0.0:
                survived += 1
        assert survived >= 0.9 * total

    def test_near_optimality_statistics(self):
        # Against the numeric curve-maximization oracle the crafted value is
        # near-optimal on the bulk of draws; the exceptions are the Talwar
        # rejection cliff at small counts and small-sample central modes, so
        # the statistics are pinned at a fixed seed rather than per draw.
        rng = np.random.default_rng(40)
        ratios = []
        for _ in range(60):
            n = int(rng.integers(10, 51))
            p = int(rng.integers(1, max(2, n // 3 + 1)))
            base = rng.standard_normal(n)
            for kind, spec in (
                (AggregatorKind.TALWAR, AggregatorSpec.talwar()),
                (AggregatorKind.TUKEY, AggregatorSpec.tukey()),
            ):
                z = mestimator_attack_values(base, p, kind, spec.c)[0]
                sc = sensitivity_curve_multi(spec, base, z, p)
                _, sc_star = max_sc_numeric(spec, base, count=p)
                ratios.append(sc / sc_star)
        ratios = np.array(ratios)
        assert np.mean(ratios >= 0.95) >= 0.85
        assert np.median(ratios) >= 0.97

    def test_mirror_symmetry_on_symmetric_bases(self):
        rng = np.random.default_rng(36)
        spec = AggregatorSpec.tukey()
        for _ in range(10):
            half = rng.standard_normal(int(rng.integers(4, 20)))
            base = np.concatenate([half, -half])
            p = int(rng.integers(1, 4))
            z = mestimator_attack_values(base, p, AggregatorKind.TUKEY, spec.c)[0]
            sc_pos = sensitivity_curve_multi(spec, base, z, p)
            sc_neg = sensitivity_curve_multi(spec, base, -z, p)
            assert abs(sc_neg) == pytest.approx(abs(sc_pos), rel=0.05)


class TestCraftAttack:
    def test_dispatch_matches_scalar_crafters(self):
        rng = np.random.default_rng(37)
        benign = rng.standard_normal((9, 4))
        ctx = CraftingContext(benign, 3)
        np.testing.assert_allclose(
            craft_attack(ctx, AttackSpec.trimmed_scm(0.1)),
            trimmed_attack_values(benign, 3, 0.1),
        )
        np.testing.assert_allclose(
            craft_attack(ctx, AttackSpec.tukey_scm(TUKEY_C_95)),
            mestimator_attack_values(benign, 3, AggregatorKind.TUKEY, TUKEY_C_95),
        )

    def test_one_dimensional_context_reduces_to_scalar(self):
        base = np.array([-1.0, 0.0, 1.0])
        ctx = CraftingContext(base, 1)
        z = craft_attack(ctx, AttackSpec.talwar_scm(TALWAR_C_95))
        assert z.shape == (1,)
        assert z[0] == mestimator_attack_values(base, 1, AggregatorKind.TALWAR, TALWAR_C_95)[0]

    def test_per_receiver_contexts_differ(self):
        rng = np.random.default_rng(38)
        spec = AttackSpec.tukey_scm(TUKEY_C_95)
        a = craft_attack(CraftingContext(rng.standard_normal((8, 3)), 2), spec)
        b = craft_attack(CraftingContext(rng.standard_normal((8, 3)), 2), spec)
        assert not np.allclose(a, b)

    def test_crafted_values_finite(self):
        rng = np.random.default_rng(39)
        benign = rng.standard_normal((12, 5)) * 1e6
        ctx = CraftingContext(benign, 4)
        for spec in (
            AttackSpec.large_value(),
            AttackSpec.trimmed_scm(TRIM_ALPHA_95),
            AttackSpec.talwar_scm(TALWAR_C_95),
            AttackSpec.tukey_scm(TUKEY_C_95),
        ):
            assert np.isfinite(craft_attack(ctx, spec)).all()

    def test_context_validation(self):
        with pytest.raises(ValueError):
            CraftingContext(np.empty((0, 3)), 1)
        with pytest.raises(ValueError):
            CraftingContext(np.ones((3, 2)), 0)
        with pytest.raises(ValueError):
            CraftingContext(np.array([[np.nan, 1.0]]), 1)

    def test_attack_spec_validation(self):
        with pytest.raises(ValueError):
            AttackSpec.talwar_scm(0.0)
        with pytest.raises(ValueError):
            AttackSpec.trimmed_scm(0.7)
        with pytest.raises(ValueError):
            AttackSpec(AttackKind.TRIMMED_SCM, epsilon=-1.0)
