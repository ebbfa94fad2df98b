"""Estimators, intervals, chi-square, evasion odds, capacity, baseline."""

import math
from fractions import Fraction

import numpy as np
import pytest

from sqkd2dof import (
    FixedBasis,
    FixedState,
    InterceptResend,
    MeasureResend,
    NoAttack,
    QubitInterceptResend,
    QubitMeasureResend,
    RandomPerRound,
    SessionConfig,
    SessionStatus,
    UniformOverFour,
    capacity_compare,
    chi_square_uniform,
    estimate_detection,
    evasion_probability,
    exact_detection,
    ket,
    run_baseline_session,
    wilson_interval,
)
from sqkd2dof.attacks import KET_ORDER
from sqkd2dof.states import ALL_BASES


class TestWilsonInterval:
    def test_contains_point_estimate(self):
        gen = np.random.default_rng(1)
        for _ in range(50):
            n = int(gen.integers(10, 10_000))
            k = int(gen.integers(0, n + 1))
            lo, hi = wilson_interval(k, n)
            assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_width_shrinks_like_inverse_sqrt(self):
        w100 = np.diff(wilson_interval(50, 100))[0]
        w10000 = np.diff(wilson_interval(5000, 10_000))[0]
        assert w10000 < w100 / 5  # ~1/10 expected

    def test_degenerate(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_never_collapses_at_extremes(self):
        lo, hi = wilson_interval(0, 1000)
        assert lo < 1e-12 and hi > 1e-4


class TestEstimateDetection:
    def test_no_attack_exact_zeros(self):
        stats = estimate_detection(NoAttack(), 5000, seed=1)
        assert stats.ctrl_detection_rate == 0.0
        assert stats.sift_mismatch_rate == 0.0
        assert stats.abort_fraction == 0.0
        assert stats.ctrl_rounds + stats.sift_rounds == 5000

    def test_rejects_tiny_round_counts(self):
        with pytest.raises(ValueError, match="at least 100"):
            estimate_detection(NoAttack(), 99, seed=1)

    def test_thread_count_does_not_change_results(self):
        attack = MeasureResend(UniformOverFour())
        a = estimate_detection(attack, 30_000, seed=5, threads=1)
        b = estimate_detection(attack, 30_000, seed=5, threads=4)
        assert a == b

    def test_interval_coverage(self):
        """Over 200 seeds, the 95% Wilson interval catches the exact rate in
        at least 90% of runs."""
        attack = MeasureResend(UniformOverFour())
        p = float(exact_detection(attack).ctrl_detection)
        hits = 0
        for seed in range(200):
            stats = estimate_detection(attack, 400, seed=seed)
            lo, hi = stats.ctrl_detection_ci
            hits += lo <= p <= hi
        assert hits >= 180

    def test_abort_fraction_counts_error_events(self):
        attack = InterceptResend(FixedState(ket("H", "s")))
        stats = estimate_detection(attack, 20_000, seed=2)
        expected = stats.ctrl_detection_rate * stats.ctrl_rounds / stats.trials
        assert abs(stats.abort_fraction - expected) < 1e-12


class TestChiSquare:
    def test_perfectly_uniform(self):
        stat, p = chi_square_uniform((2500, 2500, 2500, 2500))
        assert stat == 0.0
        assert p == 1.0

    def test_concentrated_histogram(self):
        # sum (O-E)^2/E with E=2500: 4 * 2500 = 10^4
        stat, p = chi_square_uniform((5000, 5000, 0, 0))
        assert abs(stat - 10_000.0) < 1e-9
        assert p < 1e-15

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="at least 20"):
            chi_square_uniform((4, 4, 4, 4))

    def test_null_distribution_of_p(self):
        """Honest histograms are uniform: p > 0.001 nearly always."""
        gen = np.random.default_rng(3)
        ok = 0
        for _ in range(100):
            hist = np.bincount(gen.integers(0, 4, size=2000), minlength=4)
            _, p = chi_square_uniform(tuple(int(c) for c in hist))
            ok += p > 0.001
        assert ok >= 97


class TestEvasionProbability:
    def test_single_round_values(self):
        assert evasion_probability("uniform-fake", 1) == 1 / 16
        assert evasion_probability("uniform-basis", 1) == 1 / 4

    def test_three_rounds_basis(self):
        assert evasion_probability("uniform-basis", 3) == 1 / 64

    def test_empty_product(self):
        assert evasion_probability("uniform-fake", 0) == 1.0

    def test_multiplicativity_against_per_round_enumeration(self):
        """The per-round evasion events come straight from enumeration: the
        uniform fake matches the prepared ket on exactly 1 of 16 kets, and
        exactly 1 of 4 bases leaves it untouched; N rounds multiply."""
        weights = RandomPerRound.uniform().weights
        p_fake = weights[KET_ORDER.index("Ss")]
        assert p_fake == Fraction(1, 16)
        quiet_bases = []
        for basis in ALL_BASES:
            ex = exact_detection(MeasureResend(FixedBasis(basis)))
            if ex.ctrl_detection == 0 and ex.sift_tv_distance == 0:
                quiet_bases.append(basis.name)
        assert quiet_bases == ["XpXs"]
        for n in range(1, 9):
            assert evasion_probability("uniform-fake", n) == float(p_fake**n)
            assert evasion_probability("uniform-fake", n) == evasion_probability("uniform-fake", 1) ** n
            assert evasion_probability("uniform-basis", n) == float(Fraction(1, 4) ** n)
            assert evasion_probability("uniform-basis", n) == evasion_probability("uniform-basis", 1) ** n

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown evasion family"):
            evasion_probability("coin-flips", 3)


class TestBaseline:
    def test_honest_session_perfect(self):
        for seed in range(5):
            res = run_baseline_session(SessionConfig(L=64, seed=seed))
            assert res.status is SessionStatus.COMPLETED
            assert res.ctrl_error_rate == 0.0
            assert res.sift_error_rate == 0.0
            assert res.alice_key == res.bob_key
            assert len(res.alice_key) == 64

    def test_honest_outcomes_split_evenly(self):
        res = run_baseline_session(SessionConfig(L=2000, seed=1))
        h0, h1 = res.sift_check_histogram
        assert abs(h0 / (h0 + h1) - 0.5) < 4 * math.sqrt(0.25 / (h0 + h1))

    def test_intercept_resend_detection_half(self):
        """Fake |0> against the diagonal check: |<-|0>|^2 = 1/2 per round."""
        attack = QubitInterceptResend(np.array([1.0, 0.0]))
        bad = total = 0
        for seed in range(40):
            res = run_baseline_session(
                SessionConfig(L=64, seed=seed, tau_ctrl=0.99, tau_sift=0.99), attack
            )
            assert res.status is SessionStatus.COMPLETED
            bad += round(res.ctrl_error_rate * res.n_ctrl)
            total += res.n_ctrl
        assert abs(bad / total - 0.5) <= 4 * math.sqrt(0.25 / total)

    def test_diagonal_measure_resend_invisible(self):
        res = run_baseline_session(SessionConfig(L=64, seed=3), QubitMeasureResend("X"))
        assert res.status is SessionStatus.COMPLETED
        assert res.ctrl_error_rate == 0.0

    def test_uniform_measure_resend_detected(self):
        attack = QubitMeasureResend("uniform")
        res = run_baseline_session(SessionConfig(L=64, seed=4), attack)
        assert res.status is SessionStatus.ABORTED_STEP5

    def test_attack_validation(self):
        with pytest.raises(ValueError):
            QubitInterceptResend(np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            QubitMeasureResend("Y")


class TestCapacity:
    @pytest.mark.parametrize("L", [16, 64, 256])
    def test_ratio_exactly_two(self, L):
        cap = capacity_compare(SessionConfig(L=L, seed=123))
        assert cap.ratio == 2.0
        assert cap.bits_per_sift_photon_2dof == 2.0
        assert cap.bits_per_sift_photon_1dof == 1.0
        assert cap.key_bits_2dof == 2 * L
        assert cap.key_bits_1dof == L

    def test_ratio_invariant_across_seeds(self):
        ratios = {capacity_compare(SessionConfig(L=32, seed=s)).ratio for s in range(5)}
        assert ratios == {2.0}
