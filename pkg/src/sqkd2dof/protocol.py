"""Session state machines for the quantum sender and the classical receiver.

One session runs N = ceil(4L(1+delta)) rounds.  Alice prepares every photon
in the doubly-diagonal state |S>x|s>, sends it to Bob and measures whatever
comes back; Bob either reflects the photon untouched (CTRL) or measures it in
the computational basis Z x Z and resends the ket he found (SIFT) — the only
quantum-free operations available to a classical party.  After Bob announces
which rounds he reflected:

* every CTRL round is checked by Alice in the diagonal basis (step-5 check);
* L randomly sampled SIFT rounds are compared outcome-by-outcome with Bob
  (step-6 check), and the outcome histogram is kept because a swapped-in fake
  photon shows up as a skewed distribution rather than as mismatches;
* the first L remaining SIFT rounds yield the raw key, two bits per photon
  (Hb1=00, Hb2=01, Vb1=10, Vb2=11).

Randomness is drawn from counter-based substreams keyed by (seed, purpose)
and indexed by round number, so per-round results are independent of
execution order and worker count; a session is a pure function of
(config, attack).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction

from .attacks import (
    AttackModel,
    EveRecord,
    NoAttack,
    attack_kind,
    tap_backward_with_draws,
    tap_forward_with_draws,
)
from .rng import RandomSource
from .states import (
    BASIS_XX,
    BASIS_ZZ,
    Outcome,
    PhotonState,
    ket,
    measure,
    measure_photon_with_uniform,
    measure_with_uniform,
)

# Substream ids, one per source of randomness; round i uses element i.
STREAM_EVE_CHOICE = 1
STREAM_EVE_FORWARD = 2
STREAM_BOB_ACTION = 3
STREAM_BOB_MEASURE = 4
STREAM_EVE_BACKWARD = 5
STREAM_ALICE_MEASURE = 6
STREAM_SIFT_SAMPLE = 7

_XX_EXPECTED = BASIS_XX.index_of("S", "s")


class BobAction(Enum):
    CTRL = "CTRL"
    SIFT = "SIFT"


class RoundUse(Enum):
    CTRL_CHECK = "CTRL-check"
    SIFT_CHECK = "SIFT-check"
    KEY = "KEY"
    DISCARDED = "DISCARDED"


class SessionStatus(Enum):
    COMPLETED = "Completed"
    ABORTED_STEP5 = "AbortedStep5"
    ABORTED_STEP6 = "AbortedStep6"
    ABORTED_INSUFFICIENT_SIFT = "AbortedInsufficientSift"


class InsufficientSiftError(Exception):
    """Too few measured rounds to run both the check and key derivation."""


@dataclass(frozen=True)
class SessionConfig:
    """Protocol parameters.

    ``L`` is the target number of key photons; the check consumes another L.
    ``delta`` oversizes the session so that about N/2 = 2L(1+delta) measured
    rounds arrive.  ``tau_ctrl`` and ``tau_sift`` are the abort thresholds of
    the two error checks (0 = any error aborts, the noiseless default).
    """

    L: int
    delta: float = 0.25
    tau_ctrl: float = 0.0
    tau_sift: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be a positive integer")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        for name in ("tau_ctrl", "tau_sift"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v!r}")

    @property
    def n_rounds(self) -> int:
        """N = ceil(4L(1+delta)), computed over rationals.

        ``delta`` is read as the decimal it prints as (nearest rational with
        denominator <= 10^6) so e.g. delta=0.1 gives exactly 4L*1.1.
        """
        frac = Fraction(4 * self.L) * (1 + Fraction(self.delta).limit_denominator(10**6))
        return math.ceil(frac)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    bob_action: BobAction
    bob_outcome: Outcome | None
    alice_basis: object
    alice_outcome: Outcome
    used_for: RoundUse


@dataclass(frozen=True)
class RawKey:
    """Raw key bits, two per measured photon, before any post-processing."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("key bits must be 0 or 1")

    @classmethod
    def from_outcomes(cls, outcomes) -> "RawKey":
        bits = []
        for out in outcomes:
            v = out.key_bits
            bits.append(v >> 1)
            bits.append(v & 1)
        return cls(tuple(bits))

    def as_str(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class SessionResult:
    status: SessionStatus
    ctrl_error_rate: float | None
    sift_error_rate: float | None
    sift_check_histogram: tuple[int, int, int, int] | None
    alice_key: RawKey | None
    bob_key: RawKey | None
    records: tuple[RoundRecord, ...]
    eve_records: tuple[EveRecord, ...]
    config: SessionConfig
    attack_label: str

    @property
    def completed(self) -> bool:
        return self.status is SessionStatus.COMPLETED


# -- individual protocol steps -------------------------------------------------


def alice_prepare(config: SessionConfig) -> list[PhotonState]:
    """Step 1: N photons, every one in the doubly-diagonal state |S>x|s>."""
    return [ket("S", "s")] * config.n_rounds


def bob_act(state: PhotonState, rng: RandomSource) -> tuple[BobAction, PhotonState, Outcome | None]:
    """Step 2: reflect unchanged (CTRL) or measure in Z x Z and resend (SIFT).

    Each action is chosen with probability 1/2.  Bob never measures in any
    other basis and only ever resends computational-basis kets.
    """
    gen = rng.generator()
    if gen.random() < 0.5:
        return BobAction.CTRL, state, None
    outcome, collapsed = measure_with_uniform(state, BASIS_ZZ, gen.random())
    return BobAction.SIFT, collapsed, outcome


def alice_measure(state: PhotonState, action_announced: BobAction, rng: RandomSource) -> Outcome:
    """Step 4: diagonal basis for reflected rounds, computational for measured."""
    basis = BASIS_XX if action_announced is BobAction.CTRL else BASIS_ZZ
    return measure(state, basis, rng)[0]


def ctrl_error_rate(records) -> float:
    """Step 5 statistic: fraction of reflected rounds Alice saw disturbed."""
    ctrl = [r for r in records if r.bob_action is BobAction.CTRL]
    if not ctrl:
        raise ValueError("no CTRL rounds to check (degenerate session)")
    bad = sum(1 for r in ctrl if r.alice_outcome.index != _XX_EXPECTED)
    return bad / len(ctrl)


def sift_error_check(
    records, config: SessionConfig, rng: RandomSource
) -> tuple[list[RoundRecord], float, tuple[int, int, int, int]]:
    """Step 6: sample L measured rounds, compare outcomes, tally Alice's results.

    Returns the sampled records, the fraction on which Alice and Bob disagree,
    and the histogram of Alice's outcomes over the sample (an honest session
    is uniform over the four kets).
    """
    sift = [r for r in records if r.bob_action is BobAction.SIFT]
    if len(sift) < 2 * config.L:
        raise InsufficientSiftError(
            f"need at least {2 * config.L} SIFT rounds (L for the check, L for the key), got {len(sift)}"
        )
    picks = rng.generator().choice(len(sift), size=config.L, replace=False)
    sampled = [sift[j] for j in sorted(int(j) for j in picks)]
    mismatches = sum(1 for r in sampled if r.alice_outcome.index != r.bob_outcome.index)
    hist = [0, 0, 0, 0]
    for r in sampled:
        hist[r.alice_outcome.index] += 1
    return sampled, mismatches / config.L, tuple(hist)


def derive_raw_key(records, config: SessionConfig) -> tuple[RawKey, RawKey]:
    """Step 7: first L remaining measured rounds, two bits per photon each.

    ``records`` must be the SIFT rounds not consumed by the step-6 check.
    """
    sift = sorted((r for r in records if r.bob_action is BobAction.SIFT), key=lambda r: r.round)
    if len(sift) < config.L:
        raise InsufficientSiftError(f"need {config.L} key rounds, got {len(sift)}")
    chosen = sift[: config.L]
    alice = RawKey.from_outcomes(r.alice_outcome for r in chosen)
    bob = RawKey.from_outcomes(r.bob_outcome for r in chosen)
    return alice, bob


# -- full session ---------------------------------------------------------------


@dataclass(frozen=True)
class RoundDraws:
    """Per-purpose uniform variates, one row of each list per round."""

    eve_choice: list[float]
    eve_forward: list[float]
    bob_action: list[float]
    bob_measure: list[float]
    eve_backward: list[float]
    alice_measure: list[float]


def build_round_draws(seed: int, n: int) -> RoundDraws:
    def stream(sid: int) -> list[float]:
        return RandomSource(seed, sid).uniforms(n).tolist()

    return RoundDraws(
        eve_choice=stream(STREAM_EVE_CHOICE),
        eve_forward=stream(STREAM_EVE_FORWARD),
        bob_action=stream(STREAM_BOB_ACTION),
        bob_measure=stream(STREAM_BOB_MEASURE),
        eve_backward=stream(STREAM_EVE_BACKWARD),
        alice_measure=stream(STREAM_ALICE_MEASURE),
    )


def simulate_round(
    attack: AttackModel, state: PhotonState, draws: RoundDraws, i: int
) -> tuple[bool, Outcome | None, Outcome, Outcome | None, int | None]:
    """One photon's round trip: forward tap, Bob, backward tap, Alice.

    Depends only on the attack, the prepared state and row i of the draw
    table, so rounds may be evaluated in any order or in parallel.
    Returns (is_sift, bob_outcome, alice_outcome, eve_observed, eve_guess).
    """
    carrier, eve_obs, eve_guess = tap_forward_with_draws(
        attack, state, draws.eve_choice[i], draws.eve_forward[i]
    )
    is_sift = draws.bob_action[i] >= 0.5
    bob_outcome = None
    if is_sift:
        if type(carrier) is PhotonState:
            bob_outcome, carrier = measure_with_uniform(carrier, BASIS_ZZ, draws.bob_measure[i])
        else:
            bob_outcome, carrier = measure_photon_with_uniform(carrier, BASIS_ZZ, draws.bob_measure[i])
    carrier, obs_b, guess_b = tap_backward_with_draws(attack, carrier, draws.eve_backward[i])
    if eve_obs is None and obs_b is not None:
        eve_obs, eve_guess = obs_b, guess_b
    basis = BASIS_ZZ if is_sift else BASIS_XX
    if type(carrier) is PhotonState:
        alice_outcome, _ = measure_with_uniform(carrier, basis, draws.alice_measure[i])
    else:
        alice_outcome, _ = measure_photon_with_uniform(carrier, basis, draws.alice_measure[i])
    return is_sift, bob_outcome, alice_outcome, eve_obs, eve_guess


def run_session(config: SessionConfig, attack: AttackModel = NoAttack()) -> SessionResult:
    """Execute steps 1-7 and return the full transcript.

    Threshold breaches and sampling shortfalls come back as statuses, never
    as exceptions.  The result is a pure function of (config, attack).
    """
    n = config.n_rounds
    prepared = alice_prepare(config)
    draws = build_round_draws(config.seed, n)
    kind = attack_kind(attack)

    records: list[RoundRecord] = []
    eve_records: list[EveRecord] = []
    for i in range(n):
        is_sift, bob_outcome, alice_outcome, eve_obs, eve_guess = simulate_round(
            attack, prepared[i], draws, i
        )
        action = BobAction.SIFT if is_sift else BobAction.CTRL
        records.append(
            RoundRecord(
                round=i,
                bob_action=action,
                bob_outcome=bob_outcome,
                alice_basis=BASIS_ZZ if is_sift else BASIS_XX,
                alice_outcome=alice_outcome,
                used_for=RoundUse.DISCARDED if is_sift else RoundUse.CTRL_CHECK,
            )
        )
        if kind is not None:
            eve_records.append(EveRecord(i, kind, eve_obs, eve_guess))

    def result(status, ctrl_rate=None, sift_rate=None, hist=None, alice_key=None, bob_key=None):
        return SessionResult(
            status=status,
            ctrl_error_rate=ctrl_rate,
            sift_error_rate=sift_rate,
            sift_check_histogram=hist,
            alice_key=alice_key,
            bob_key=bob_key,
            records=tuple(records),
            eve_records=tuple(eve_records),
            config=config,
            attack_label=attack.describe(),
        )

    # Step 5: the reflection check.
    try:
        ctrl_rate = ctrl_error_rate(records)
    except ValueError:
        # No CTRL rounds at all: a sampling accident, not evidence of Eve.
        return result(SessionStatus.ABORTED_INSUFFICIENT_SIFT)
    if ctrl_rate > config.tau_ctrl:
        return result(SessionStatus.ABORTED_STEP5, ctrl_rate=ctrl_rate)

    # Step 6: the measurement comparison check.
    try:
        sampled, sift_rate, hist = sift_error_check(
            records, config, RandomSource(config.seed, STREAM_SIFT_SAMPLE)
        )
    except InsufficientSiftError:
        return result(SessionStatus.ABORTED_INSUFFICIENT_SIFT, ctrl_rate=ctrl_rate)
    sampled_rounds = {r.round for r in sampled}
    for r in sampled:
        records[r.round] = replace(r, used_for=RoundUse.SIFT_CHECK)
    if sift_rate > config.tau_sift:
        return result(SessionStatus.ABORTED_STEP6, ctrl_rate=ctrl_rate, sift_rate=sift_rate, hist=hist)

    # Step 7: the raw key.
    remaining = [
        r
        for r in records
        if r.bob_action is BobAction.SIFT and r.round not in sampled_rounds
    ]
    alice_key, bob_key = derive_raw_key(remaining, config)
    for r in remaining[: config.L]:
        records[r.round] = replace(r, used_for=RoundUse.KEY)
    return result(
        SessionStatus.COMPLETED,
        ctrl_rate=ctrl_rate,
        sift_rate=sift_rate,
        hist=hist,
        alice_key=alice_key,
        bob_key=bob_key,
    )


# -- transcript export ----------------------------------------------------------

TRANSCRIPT_FIELDS = ("round", "bob_action", "bob_outcome", "alice_basis", "alice_outcome", "used_for")


def transcript_rows(result: SessionResult) -> list[dict]:
    """One plain dict per round, fields as in TRANSCRIPT_FIELDS."""
    rows = []
    for r in result.records:
        rows.append(
            {
                "round": r.round,
                "bob_action": r.bob_action.value,
                "bob_outcome": None if r.bob_outcome is None else r.bob_outcome.label,
                "alice_basis": r.alice_basis.name,
                "alice_outcome": r.alice_outcome.label,
                "used_for": r.used_for.value,
            }
        )
    return rows


def transcript_to_csv(result: SessionResult, fileobj=None) -> str:
    """Transcript as CSV text (also written to ``fileobj`` when given)."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRANSCRIPT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in transcript_rows(result):
        row = dict(row)
        if row["bob_outcome"] is None:
            row["bob_outcome"] = ""
        writer.writerow(row)
    text = buf.getvalue()
    if fileobj is not None:
        fileobj.write(text)
    return text


def transcript_to_json(result: SessionResult) -> str:
    """Transcript as a JSON array with the same field names as the CSV."""
    return json.dumps(transcript_rows(result), indent=2, sort_keys=True)
