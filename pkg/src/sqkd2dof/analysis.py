"""Monte Carlo estimators, statistical tests and the capacity comparison.

Every sampled quantity here has an exact counterpart: detection rates are
checked against :mod:`sqkd2dof.oracle`'s branch enumeration, and lucky-evasion
odds against closed forms.  Estimators draw per-round substreams, so results
are identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import scipy.stats

from .attacks import AttackModel, NoAttack
from .baseline import BaselineAttack, run_baseline_session
from .protocol import (
    SessionConfig,
    SessionStatus,
    build_round_draws,
    run_session,
    simulate_round,
)
from .states import ket

Z95 = float(scipy.stats.norm.ppf(0.975))

_CHUNK = 16384

EVASION_FAMILIES = {
    # per-round probability that the attack leaves the prepared state intact
    "uniform-fake": Fraction(1, 16),  # random fake photon happens to match
    "uniform-basis": Fraction(1, 4),  # random basis choice happens to commute
}


class SessionAbortError(RuntimeError):
    """A session needed by an estimator aborted instead of completing."""

    def __init__(self, status: SessionStatus, which: str):
        super().__init__(f"{which} session aborted with status {status.value}")
        self.status = status


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score 95% confidence interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def total_variation_from_uniform(histogram) -> float:
    """TV distance between an empirical histogram and the uniform distribution."""
    total = sum(histogram)
    if total == 0:
        return 0.0
    k = len(histogram)
    return 0.5 * sum(abs(c / total - 1.0 / k) for c in histogram)


@dataclass(frozen=True)
class DetectionStats:
    """Sampled per-round detection statistics for one attack configuration."""

    attack: str
    trials: int
    ctrl_rounds: int
    sift_rounds: int
    ctrl_detection_rate: float
    ctrl_detection_ci: tuple[float, float]
    sift_mismatch_rate: float
    sift_mismatch_ci: tuple[float, float]
    sift_tv_distance: float
    abort_fraction: float
    sift_histogram: tuple[int, int, int, int]

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "trials": self.trials,
            "ctrl_rounds": self.ctrl_rounds,
            "sift_rounds": self.sift_rounds,
            "ctrl_detection_rate": self.ctrl_detection_rate,
            "ctrl_detection_ci": list(self.ctrl_detection_ci),
            "sift_mismatch_rate": self.sift_mismatch_rate,
            "sift_mismatch_ci": list(self.sift_mismatch_ci),
            "sift_tv_distance": self.sift_tv_distance,
            "abort_fraction": self.abort_fraction,
            "sift_histogram": list(self.sift_histogram),
        }


def estimate_detection(
    attack: AttackModel, rounds: int, seed: int, threads: int = 1
) -> DetectionStats:
    """Simulate independent rounds (not full sessions) and tally check events.

    Each round runs forward tap -> Bob -> backward tap -> Alice.  A CTRL round
    counts as a detection when Alice misses the prepared state; a SIFT round
    when her result differs from Bob's.  ``abort_fraction`` is the fraction of
    all rounds showing either event, i.e. what a zero-threshold checker would
    flag.  Wilson 95% intervals accompany both rates.
    """
    if rounds < 100:
        raise ValueError(f"need at least 100 rounds for a meaningful estimate, got {rounds}")
    draws = build_round_draws(seed, rounds)
    prepared = ket("S", "s")

    def tally(bounds: tuple[int, int]) -> tuple[int, int, int, int, list[int]]:
        start, stop = bounds
        n_ctrl = ctrl_bad = n_sift = n_mismatch = 0
        hist = [0, 0, 0, 0]
        for i in range(start, stop):
            is_sift, bob_outcome, alice_outcome, _, _ = simulate_round(attack, prepared, draws, i)
            if is_sift:
                n_sift += 1
                hist[alice_outcome.index] += 1
                if alice_outcome.index != bob_outcome.index:
                    n_mismatch += 1
            else:
                n_ctrl += 1
                if alice_outcome.index != 0:  # diagonal basis lists |S>x|s> first
                    ctrl_bad += 1
        return n_ctrl, ctrl_bad, n_sift, n_mismatch, hist

    chunks = [(lo, min(lo + _CHUNK, rounds)) for lo in range(0, rounds, _CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(tally, chunks))
    else:
        parts = [tally(c) for c in chunks]

    n_ctrl = sum(p[0] for p in parts)
    ctrl_bad = sum(p[1] for p in parts)
    n_sift = sum(p[2] for p in parts)
    n_mismatch = sum(p[3] for p in parts)
    hist = tuple(sum(p[4][k] for p in parts) for k in range(4))

    return DetectionStats(
        attack=attack.describe(),
        trials=rounds,
        ctrl_rounds=n_ctrl,
        sift_rounds=n_sift,
        ctrl_detection_rate=ctrl_bad / n_ctrl if n_ctrl else 0.0,
        ctrl_detection_ci=wilson_interval(ctrl_bad, n_ctrl),
        sift_mismatch_rate=n_mismatch / n_sift if n_sift else 0.0,
        sift_mismatch_ci=wilson_interval(n_mismatch, n_sift),
        sift_tv_distance=total_variation_from_uniform(hist),
        abort_fraction=(ctrl_bad + n_mismatch) / rounds,
        sift_histogram=hist,
    )


def evasion_probability(family: str, n_rounds: int) -> float:
    """Probability a randomized attack leaves all n rounds untouched.

    ``uniform-fake``: per-round fake photon drawn uniformly from the 16
    product kets matches the prepared state with probability 1/16.
    ``uniform-basis``: per-round basis drawn uniformly from the four product
    bases commutes with the prepared state with probability 1/4.
    """
    if family not in EVASION_FAMILIES:
        raise ValueError(f"unknown evasion family {family!r}; expected one of {sorted(EVASION_FAMILIES)}")
    if n_rounds < 0:
        raise ValueError("round count must be non-negative")
    return float(EVASION_FAMILIES[family] ** n_rounds)


def chi_square_uniform(histogram) -> tuple[float, float]:
    """Pearson chi-square of a histogram against the uniform distribution.

    Returns (statistic, p-value); for 4 bins the statistic has 3 degrees of
    freedom under the null.
    """
    total = sum(histogram)
    if total < 20:
        raise ValueError(f"need at least 20 samples for the chi-square test, got {total}")
    stat, p = scipy.stats.chisquare(list(histogram))
    return float(stat), float(p)


@dataclass(frozen=True)
class CapacityReport:
    """Raw-key throughput of the dual-degree protocol vs the qubit baseline."""

    bits_per_sift_photon_2dof: float
    bits_per_sift_photon_1dof: float
    ratio: float
    key_bits_2dof: int
    key_bits_1dof: int

    def to_dict(self) -> dict:
        return {
            "bits_per_sift_photon_2dof": self.bits_per_sift_photon_2dof,
            "bits_per_sift_photon_1dof": self.bits_per_sift_photon_1dof,
            "ratio": self.ratio,
            "key_bits_2dof": self.key_bits_2dof,
            "key_bits_1dof": self.key_bits_1dof,
        }


def capacity_compare(config: SessionConfig) -> CapacityReport:
    """Run both protocols honestly at the same parameters and compare keys.

    Throughput is measured from the actual completed sessions: raw key length
    divided by the number of key photons (L).
    """
    dual = run_session(config, NoAttack())
    if not dual.completed:
        raise SessionAbortError(dual.status, "dual-degree")
    single = run_baseline_session(config, NoAttack())
    if not single.completed:
        raise SessionAbortError(single.status, "baseline")
    bits2 = len(dual.alice_key) / config.L
    bits1 = len(single.alice_key) / config.L
    return CapacityReport(
        bits_per_sift_photon_2dof=bits2,
        bits_per_sift_photon_1dof=bits1,
        ratio=bits2 / bits1,
        key_bits_2dof=len(dual.alice_key),
        key_bits_1dof=len(single.alice_key),
    )
