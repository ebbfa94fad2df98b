"""Single-degree-of-freedom reference protocol for the capacity comparison.

Same session structure as the main protocol, but the photon carries one qubit:
Alice prepares (|0> + |1>)/sqrt(2), Bob measures-and-resends in {|0>, |1>} or
reflects, Alice checks reflected rounds in the diagonal basis.  Each measured
photon yields one raw key bit, against two for the dual-degree protocol.

Only the minimal structure needed for a like-for-like comparison is modeled;
attack analogs mirror the single-photon families on a qubit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .attacks import NoAttack
from .protocol import (
    STREAM_SIFT_SAMPLE,
    RawKey,
    SessionConfig,
    SessionStatus,
    build_round_draws,
)
from .rng import RandomSource
from .states import branch_index

_R = math.sqrt(0.5)
_BRA_Z = np.eye(2, dtype=np.complex128)
_BRA_X = np.array([[_R, _R], [_R, -_R]], dtype=np.complex128)
_KETS_Z = (np.array([1.0, 0.0], dtype=np.complex128), np.array([0.0, 1.0], dtype=np.complex128))
_KETS_X = (np.array([_R, _R], dtype=np.complex128), np.array([_R, -_R], dtype=np.complex128))
_PLUS = _KETS_X[0]


@dataclass(frozen=True, eq=False)
class QubitInterceptResend:
    """Swap the forward qubit for a fixed fake state."""

    fake: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.fake, dtype=np.complex128).reshape(-1)
        if arr.shape != (2,):
            raise ValueError("fake qubit state needs exactly 2 amplitudes")
        norm_sq = float(np.sum(arr.real**2 + arr.imag**2))
        if abs(norm_sq - 1.0) > 1e-12:
            raise ValueError("fake qubit state must be normalized")
        arr.setflags(write=False)
        object.__setattr__(self, "fake", arr)

    def describe(self) -> str:
        return "qubit-intercept-resend"


@dataclass(frozen=True)
class QubitMeasureResend:
    """Measure the forward qubit in Z, X, or a uniformly random choice of the two."""

    basis: str = "uniform"

    def __post_init__(self):
        if self.basis not in ("Z", "X", "uniform"):
            raise ValueError(f"basis must be Z, X or uniform, got {self.basis!r}")

    def describe(self) -> str:
        return f"qubit-measure-resend(basis={self.basis})"


BaselineAttack = Union[NoAttack, QubitInterceptResend, QubitMeasureResend]


@dataclass(frozen=True)
class BaselineResult:
    status: SessionStatus
    ctrl_error_rate: float | None
    sift_error_rate: float | None
    sift_check_histogram: tuple[int, int] | None
    alice_key: RawKey | None
    bob_key: RawKey | None
    n_ctrl: int
    n_sift: int
    config: SessionConfig
    attack_label: str

    @property
    def completed(self) -> bool:
        return self.status is SessionStatus.COMPLETED


def _measure2(bra: np.ndarray, state: np.ndarray, u: float) -> int:
    amp = bra @ state
    probs = (amp.real**2 + amp.imag**2).tolist()
    return branch_index(probs, u)


def simulate_baseline_round(attack: BaselineAttack, draws, i: int) -> tuple[bool, int | None, int]:
    """(is_sift, bob_bit, alice_outcome_index) for one qubit round trip."""
    state = _PLUS
    if isinstance(attack, QubitInterceptResend):
        state = attack.fake
    elif isinstance(attack, QubitMeasureResend):
        if attack.basis == "Z":
            bra, kets = _BRA_Z, _KETS_Z
        elif attack.basis == "X":
            bra, kets = _BRA_X, _KETS_X
        elif draws.eve_choice[i] < 0.5:
            bra, kets = _BRA_Z, _KETS_Z
        else:
            bra, kets = _BRA_X, _KETS_X
        state = kets[_measure2(bra, state, draws.eve_forward[i])]
    is_sift = draws.bob_action[i] >= 0.5
    bob_bit = None
    if is_sift:
        bob_bit = _measure2(_BRA_Z, state, draws.bob_measure[i])
        state = _KETS_Z[bob_bit]
    if is_sift:
        alice = _measure2(_BRA_Z, state, draws.alice_measure[i])
    else:
        alice = _measure2(_BRA_X, state, draws.alice_measure[i])
    return is_sift, bob_bit, alice


def run_baseline_session(config: SessionConfig, attack: BaselineAttack = NoAttack()) -> BaselineResult:
    """Steps 1-7 on the qubit protocol; one key bit per measured photon."""
    n = config.n_rounds
    draws = build_round_draws(config.seed, n)

    sims = [simulate_baseline_round(attack, draws, i) for i in range(n)]
    ctrl = [(i, a) for i, (is_sift, _, a) in enumerate(sims) if not is_sift]
    sift = [(i, b, a) for i, (is_sift, b, a) in enumerate(sims) if is_sift]

    def result(status, ctrl_rate=None, sift_rate=None, hist=None, alice_key=None, bob_key=None):
        return BaselineResult(
            status=status,
            ctrl_error_rate=ctrl_rate,
            sift_error_rate=sift_rate,
            sift_check_histogram=hist,
            alice_key=alice_key,
            bob_key=bob_key,
            n_ctrl=len(ctrl),
            n_sift=len(sift),
            config=config,
            attack_label=attack.describe() if not isinstance(attack, NoAttack) else "none",
        )

    if not ctrl:
        return result(SessionStatus.ABORTED_INSUFFICIENT_SIFT)
    ctrl_rate = sum(1 for _, a in ctrl if a != 0) / len(ctrl)
    if ctrl_rate > config.tau_ctrl:
        return result(SessionStatus.ABORTED_STEP5, ctrl_rate=ctrl_rate)

    if len(sift) < 2 * config.L:
        return result(SessionStatus.ABORTED_INSUFFICIENT_SIFT, ctrl_rate=ctrl_rate)
    picks = RandomSource(config.seed, STREAM_SIFT_SAMPLE).generator().choice(
        len(sift), size=config.L, replace=False
    )
    picked = sorted(int(j) for j in picks)
    picked_set = set(picked)
    mismatches = sum(1 for j in picked if sift[j][2] != sift[j][1])
    hist = [0, 0]
    for j in picked:
        hist[sift[j][2]] += 1
    sift_rate = mismatches / config.L
    if sift_rate > config.tau_sift:
        return result(
            SessionStatus.ABORTED_STEP6, ctrl_rate=ctrl_rate, sift_rate=sift_rate, hist=tuple(hist)
        )

    remaining = [entry for j, entry in enumerate(sift) if j not in picked_set][: config.L]
    alice_key = RawKey(tuple(a for _, _, a in remaining))
    bob_key = RawKey(tuple(b for _, b, _ in remaining))
    return result(
        SessionStatus.COMPLETED,
        ctrl_rate=ctrl_rate,
        sift_rate=sift_rate,
        hist=tuple(hist),
        alice_key=alice_key,
        bob_key=bob_key,
    )
