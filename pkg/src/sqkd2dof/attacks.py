"""Eavesdropper models for the two-way photon channel.

Three active attack families are simulated as channel taps:

* intercept-resend: Eve swaps the photon for a fake of her own on the way to
  Bob, optionally measuring the returning photon in the computational basis;
* measure-resend: Eve measures the forward photon in one of the four product
  bases and forwards the collapsed ket;
* entangle-measure: Eve couples a d-dimensional probe to the photon with a
  joint unitary on the way in and another on the way out, keeping the probe.

``probe_independence_check`` evaluates an entangle-measure attack exactly (no
sampling): the error it would cause in each of the two public checks, and the
conditional probe states left behind for each of Bob's measurement results.
A zero-error attack must leave those probe states identical, which is what
makes the protocol's checks binding.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import TYPE_CHECKING, Union

import numpy as np

from .rng import RandomSource
from .states import (
    BASIS_XX,
    BASIS_ZZ,
    ALL_BASES,
    JointState,
    Outcome,
    PhotonState,
    POL_LABELS,
    ProductBasis,
    SPA_LABELS,
    branch_index,
    conditional_probe_states,
    ket,
    measure_photon_with_uniform,
    measure_with_uniform,
    require_unitary,
    tensor,
    trace_distance,
)

if TYPE_CHECKING:
    from .protocol import SessionResult

# One label per product ket, polarization-major: Hb1, Hb2, Hs, Ha, Vb1, ...
KET_ORDER: tuple[str, ...] = tuple(p + q for p, q in itertools.product(POL_LABELS, SPA_LABELS))

BACKWARD_PASSTHROUGH = "passthrough"
BACKWARD_MEASURE_ZZ = "measure-zz"

ZERO_ERROR_TOL = 1e-10
PROBE_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class NoAttack:
    """Honest channel; Eve keeps no records."""

    def describe(self) -> str:
        return "none"


@dataclass(frozen=True)
class FixedState:
    """Fake-photon source that emits the same state every round."""

    state: PhotonState

    def describe(self) -> str:
        label = state_label(self.state)
        return label if label is not None else "custom"


@dataclass(frozen=True, eq=False)
class RandomPerRound:
    """Fake-photon source drawing each round from a distribution over the 16 kets.

    ``weights`` follows :data:`KET_ORDER`.  Fractions are preserved so the
    exact oracle can enumerate the attack without rounding.
    """

    weights: tuple[Union[Fraction, float], ...]

    def __post_init__(self):
        if len(self.weights) != 16:
            raise ValueError(f"need 16 weights (one per product ket), got {len(self.weights)}")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        total = sum(self.weights)
        if abs(float(total) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {float(total)!r}")
        object.__setattr__(self, "weights", tuple(self.weights))
        cdf = []
        acc = 0.0
        for w in self.weights:
            acc += float(w)
            cdf.append(acc)
        object.__setattr__(self, "_cdf", tuple(cdf))
        object.__setattr__(self, "_kets", tuple(ket(lbl) for lbl in KET_ORDER))

    @classmethod
    def uniform(cls) -> "RandomPerRound":
        return cls((Fraction(1, 16),) * 16)

    def draw(self, u: float) -> PhotonState:
        cdf = self._cdf  # type: ignore[attr-defined]
        for i, c in enumerate(cdf):
            if u < c:
                return self._kets[i]  # type: ignore[attr-defined]
        return self._kets[15]  # type: ignore[attr-defined]

    def describe(self) -> str:
        if all(w == self.weights[0] for w in self.weights):
            return "random-uniform"
        return "random"


@dataclass(frozen=True)
class InterceptResend:
    """Swap the forward photon for a fake; optionally read the return leg."""

    fake: Union[FixedState, RandomPerRound]
    backward: str = BACKWARD_PASSTHROUGH

    def __post_init__(self):
        if self.backward not in (BACKWARD_PASSTHROUGH, BACKWARD_MEASURE_ZZ):
            raise ValueError(f"unknown backward behavior {self.backward!r}")

    def describe(self) -> str:
        return f"intercept-resend(fake={self.fake.describe()}, backward={self.backward})"


@dataclass(frozen=True)
class FixedBasis:
    basis: ProductBasis

    def describe(self) -> str:
        return self.basis.name


@dataclass(frozen=True)
class UniformOverFour:
    """Pick one of the four product bases uniformly at random each round."""

    def describe(self) -> str:
        return "uniform"


@dataclass(frozen=True)
class MeasureResend:
    """Measure the forward photon per the basis policy, resend the collapsed ket."""

    policy: Union[FixedBasis, UniformOverFour]

    def describe(self) -> str:
        return f"measure-resend(basis={self.policy.describe()})"


@dataclass(frozen=True, eq=False)
class EntangleMeasure:
    """Probe coupling: one joint unitary inbound, one outbound, probe retained."""

    probe_dim: int
    probe_init: np.ndarray
    forward_unitary: np.ndarray
    backward_unitary: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.probe_dim < 1:
            raise ValueError("probe dimension must be positive")
        eps = np.asarray(self.probe_init, dtype=np.complex128).reshape(-1)
        if eps.size != self.probe_dim:
            raise ValueError(f"probe vector has size {eps.size}, expected {self.probe_dim}")
        norm_sq = float(np.sum(eps.real**2 + eps.imag**2))
        if abs(norm_sq - 1.0) > 1e-12:
            raise ValueError(f"initial probe is not normalized: sum |amp|^2 = {norm_sq!r}")
        dim = 4 * self.probe_dim
        fwd = require_unitary(self.forward_unitary, dim=dim, what="forward unitary")
        bwd = require_unitary(self.backward_unitary, dim=dim, what="backward unitary")
        for arr in (eps, fwd, bwd):
            arr.setflags(write=False)
        object.__setattr__(self, "probe_init", eps)
        object.__setattr__(self, "forward_unitary", fwd)
        object.__setattr__(self, "backward_unitary", bwd)

    def describe(self) -> str:
        tag = self.label or "custom"
        return f"entangle-measure({tag}, d={self.probe_dim})"


AttackModel = Union[NoAttack, InterceptResend, MeasureResend, EntangleMeasure]

Carrier = Union[PhotonState, JointState]


@dataclass(frozen=True)
class EveRecord:
    """Eve's per-round transcript entry.

    ``guessed_bits`` holds her guess of the round's 2-bit key symbol and is
    present only when she observed a full computational-basis outcome.
    """

    round: int
    kind: str
    observed: Outcome | None = None
    guessed_bits: int | None = None


def attack_kind(attack: AttackModel) -> str | None:
    """Short tag for Eve's transcript; None when there is no eavesdropper."""
    if isinstance(attack, NoAttack):
        return None
    if isinstance(attack, InterceptResend):
        return "intercept-resend"
    if isinstance(attack, MeasureResend):
        return "measure-resend"
    return "entangle-measure"


def state_label(state: PhotonState, tol: float = 1e-12) -> str | None:
    """Compact label of the product ket this state equals, if any."""
    for lbl in KET_ORDER:
        if state.fidelity(ket(lbl)) > 1.0 - tol:
            return lbl
    return None


def tap_forward_with_draws(
    attack: AttackModel, state: PhotonState, u_choice: float, u_measure: float
) -> tuple[Carrier, Outcome | None, int | None]:
    """Eve's action on the Alice-to-Bob leg, with caller-supplied uniforms.

    Returns the carrier delivered to Bob (a bare photon, or the photon+probe
    joint state for entangle-measure), Eve's observation if she measured, and
    her key-symbol guess if that observation was computational-basis.
    """
    if isinstance(attack, NoAttack):
        return state, None, None
    if isinstance(attack, InterceptResend):
        if isinstance(attack.fake, FixedState):
            return attack.fake.state, None, None
        return attack.fake.draw(u_choice), None, None
    if isinstance(attack, MeasureResend):
        if isinstance(attack.policy, FixedBasis):
            basis = attack.policy.basis
        else:
            basis = ALL_BASES[min(int(u_choice * 4.0), 3)]
        outcome, collapsed = measure_with_uniform(state, basis, u_measure)
        guess = outcome.index if basis == BASIS_ZZ else None
        return collapsed, outcome, guess
    joint = tensor(state, attack.probe_init)
    evolved = JointState(attack.probe_dim, attack.forward_unitary @ joint.amps)
    return evolved, None, None


def tap_backward_with_draws(
    attack: AttackModel, carrier: Carrier, u_measure: float
) -> tuple[Carrier, Outcome | None, int | None]:
    """Eve's action on the Bob-to-Alice leg, with a caller-supplied uniform."""
    if isinstance(attack, EntangleMeasure):
        if not isinstance(carrier, JointState):
            raise TypeError("entangle-measure round lost its joint state before the return leg")
        return JointState(attack.probe_dim, attack.backward_unitary @ carrier.amps), None, None
    if isinstance(attack, InterceptResend) and attack.backward == BACKWARD_MEASURE_ZZ:
        outcome, collapsed = measure_with_uniform(carrier, BASIS_ZZ, u_measure)
        return collapsed, outcome, outcome.index
    return carrier, None, None


def tap_forward(
    attack: AttackModel, state: PhotonState, rng: RandomSource, round_index: int = 0
) -> tuple[Carrier, EveRecord | None]:
    """Forward-leg tap drawing its randomness from ``rng``."""
    gen = rng.generator()
    carrier, observed, guess = tap_forward_with_draws(attack, state, gen.random(), gen.random())
    kind = attack_kind(attack)
    if kind is None:
        return carrier, None
    return carrier, EveRecord(round_index, kind, observed, guess)


def tap_backward(
    attack: AttackModel,
    carrier: Carrier,
    rng: RandomSource,
    record: EveRecord | None = None,
    round_index: int = 0,
) -> tuple[Carrier, EveRecord | None]:
    """Return-leg tap; merges any new observation into the round's record."""
    delivered, observed, guess = tap_backward_with_draws(attack, carrier, rng.generator().random())
    kind = attack_kind(attack)
    if kind is None:
        return delivered, record
    if record is None:
        record = EveRecord(round_index, kind)
    if observed is not None:
        record = replace(record, observed=observed, guessed_bits=guess)
    return delivered, record


# -- exact analysis of entangle-measure attacks ------------------------------


@dataclass(frozen=True, eq=False)
class ProbeIndependenceReport:
    """Exact per-round error rates and conditional probe states of an attack.

    ``branch_probabilities`` are the probabilities of Bob's four
    computational-basis results; ``probe_conditionals[i]`` is Eve's normalized
    probe state on the no-error path for result i (None when that path has
    vanishing probability).
    """

    error_ctrl: float
    error_sift: float
    branch_probabilities: tuple[float, float, float, float]
    probe_conditionals: tuple[np.ndarray | None, ...]
    max_pairwise_trace_distance: float
    common_probe: np.ndarray | None

    def induces_no_error(self) -> bool:
        return self.error_ctrl < ZERO_ERROR_TOL and self.error_sift < ZERO_ERROR_TOL

    def probes_independent(self) -> bool:
        return self.max_pairwise_trace_distance < PROBE_MATCH_TOL

    def implication_verdict(self) -> str:
        """PASS/FAIL of "no induced error implies result-independent probe"."""
        if not self.induces_no_error():
            return "not-applicable"
        return "PASS" if self.probes_independent() else "FAIL"

    def pairwise_distance_matrix(self) -> list[list[float | None]]:
        """4x4 trace distances between conditional probes (None when absent)."""
        out: list[list[float | None]] = [[None] * 4 for _ in range(4)]
        for i in range(4):
            for j in range(4):
                a, b = self.probe_conditionals[i], self.probe_conditionals[j]
                if a is not None and b is not None:
                    out[i][j] = trace_distance(a, b)
        return out


def probe_independence_check(attack: EntangleMeasure) -> ProbeIndependenceReport:
    """Exact linear-algebra evaluation of an entangle-measure attack.

    Computes the reflection-check error (probability that Alice's diagonal
    measurement of an untouched round misses the prepared state), the
    measure-check error (probability that Alice's computational result differs
    from Bob's), and the probe state Eve holds conditioned on each of Bob's
    results along the error-free path.
    """
    prepared = ket("S", "s")
    joint0 = tensor(prepared, attack.probe_init)
    after_forward = JointState(attack.probe_dim, attack.forward_unitary @ joint0.amps)

    # Reflection branch: Bob returns the carrier untouched.
    reflected = JointState(attack.probe_dim, attack.backward_unitary @ after_forward.amps)
    ctrl_cond = conditional_probe_states(reflected, BASIS_XX)
    expected_idx = BASIS_XX.index_of("S", "s")
    error_ctrl = 1.0 - ctrl_cond[expected_idx][0]

    # Measurement branch: Bob collapses the photon, resends his result.
    decomposition = conditional_probe_states(after_forward, BASIS_ZZ)
    error_sift = 0.0
    branch_probs = []
    conditionals: list[np.ndarray | None] = []
    for idx, (p, probe) in enumerate(decomposition):
        branch_probs.append(p)
        if probe is None:
            conditionals.append(None)
            continue
        resent = JointState(attack.probe_dim, np.kron(BASIS_ZZ.vectors[idx].amps, probe))
        final = JointState(attack.probe_dim, attack.backward_unitary @ resent.amps)
        q, zeta = conditional_probe_states(final, BASIS_ZZ)[idx]
        error_sift += p * (1.0 - q)
        conditionals.append(zeta)

    present = [z for z in conditionals if z is not None]
    max_dist = 0.0
    for i in range(len(present)):
        for j in range(i + 1, len(present)):
            max_dist = max(max_dist, trace_distance(present[i], present[j]))

    common = None
    if present and max_dist < PROBE_MATCH_TOL:
        common = _phase_canonical(present[0])

    return ProbeIndependenceReport(
        error_ctrl=max(0.0, float(error_ctrl)),
        error_sift=max(0.0, float(error_sift)),
        branch_probabilities=tuple(float(p) for p in branch_probs),
        probe_conditionals=tuple(conditionals),
        max_pairwise_trace_distance=float(max_dist),
        common_probe=common,
    )


def _phase_canonical(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    phase = v[k] / abs(v[k])
    return v * np.conj(phase)


def haar_unitary(dim: int, rng: RandomSource) -> np.ndarray:
    """Haar-distributed random unitary via QR of a complex Ginibre matrix."""
    gen = rng.generator()
    z = (gen.normal(size=(dim, dim)) + 1j * gen.normal(size=(dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def identity_attack(probe_dim: int = 4) -> EntangleMeasure:
    """Probe rides along untouched; induces nothing and learns nothing."""
    dim = 4 * probe_dim
    eps = np.zeros(probe_dim, dtype=np.complex128)
    eps[0] = 1.0
    eye = np.eye(dim, dtype=np.complex128)
    return EntangleMeasure(probe_dim, eps, eye, eye, label="identity")


def sample_no_error_attack(probe_dim: int, rng: RandomSource) -> EntangleMeasure:
    """Random attack that provably induces no error in either check.

    Both unitaries act on the probe alone (photon factor is the identity), so
    the photon is never disturbed; the probe ends in a state independent of
    Bob's result by construction.
    """
    if probe_dim < 1:
        raise ValueError("probe dimension must be positive")
    w_in = haar_unitary(probe_dim, rng)
    w_out = haar_unitary(probe_dim, rng)
    eye4 = np.eye(4, dtype=np.complex128)
    eps = np.zeros(probe_dim, dtype=np.complex128)
    eps[0] = 1.0
    return EntangleMeasure(
        probe_dim,
        eps,
        np.kron(eye4, w_in),
        np.kron(eye4, w_out),
        label="probe-only-random",
    )


def controlled_orthogonal_attack() -> EntangleMeasure:
    """Maximally informative zero-measure-error attack (probe dimension 4).

    The forward unitary shifts the probe by the photon's computational index,
    leaving four mutually orthogonal probe states; the return leg does
    nothing.  Bob's measured rounds are reproduced perfectly, but reflected
    rounds are disturbed with probability 3/4.
    """
    d = 4
    shift = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        shift[(j + 1) % d, j] = 1.0
    blocks = [np.linalg.matrix_power(shift, k) for k in range(4)]
    fwd = np.zeros((4 * d, 4 * d), dtype=np.complex128)
    for k in range(4):
        fwd[k * d : (k + 1) * d, k * d : (k + 1) * d] = blocks[k]
    eps = np.zeros(d, dtype=np.complex128)
    eps[0] = 1.0
    return EntangleMeasure(d, eps, fwd, np.eye(4 * d, dtype=np.complex128), label="controlled-orthogonal")


# -- Eve's information --------------------------------------------------------


def eve_information(result: "SessionResult") -> float:
    """Empirical mutual information (bits per key photon) between Eve's
    recorded key-symbol guesses and Bob's actual key symbols, over the rounds
    that produced the raw key.  Zero when Eve has no records.
    """
    from .protocol import RoundUse, SessionStatus

    if result.status is not SessionStatus.COMPLETED:
        raise ValueError(f"session did not complete (status {result.status.value})")
    if not result.eve_records:
        return 0.0
    eve_by_round = {rec.round: rec for rec in result.eve_records}
    counts: dict[tuple[int | None, int], int] = {}
    for rec in result.records:
        if rec.used_for is not RoundUse.KEY:
            continue
        symbol = rec.bob_outcome.key_bits
        eve_rec = eve_by_round.get(rec.round)
        guess = eve_rec.guessed_bits if eve_rec is not None else None
        key = (guess, symbol)
        counts[key] = counts.get(key, 0) + 1
    return mutual_information_bits(counts)


def mutual_information_bits(counts: dict[tuple, int]) -> float:
    """Mutual information of an empirical joint frequency table, in bits."""
    total = sum(counts.values())
    if total == 0:
        return 0.0
    left: dict[object, int] = {}
    right: dict[object, int] = {}
    for (a, b), c in counts.items():
        left[a] = left.get(a, 0) + c
        right[b] = right.get(b, 0) + c
    mi = 0.0
    for (a, b), c in counts.items():
        if c == 0:
            continue
        p = c / total
        mi += p * math.log2(p * total * total / (left[a] * right[b]))
    return max(0.0, mi)
