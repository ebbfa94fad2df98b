"""Exact branch enumeration for the finite attack families.

Independent of the sampling simulator: states are tracked as ket labels, and
every random choice (Eve's fake or basis, Bob's action, each measurement
collapse) becomes an enumerated branch with an exact rational probability.
Transition probabilities between named kets factor per degree of freedom and
take only the values 0, 1/4, 1/2 and 1, so all results are exact dyadic
rationals; arbitrary-amplitude fake states degrade gracefully to floats for
the first transition they enter.

Entangle-measure attacks have no finite branch tree over kets; they are
evaluated by :func:`sqkd2dof.attacks.probe_independence_check` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .attacks import (
    BACKWARD_MEASURE_ZZ,
    AttackModel,
    FixedBasis,
    FixedState,
    InterceptResend,
    KET_ORDER,
    MeasureResend,
    NoAttack,
    RandomPerRound,
    UniformOverFour,
    mutual_information_bits,
    state_label,
)
from .states import ALL_BASES, BASIS_XX, BASIS_ZZ, ProductBasis, ket, parse_ket_label

Prob = Union[Fraction, float]

# Which basis (Z or X) each single-DOF label belongs to, and its index there.
_POL_GROUP = {"H": ("Z", 0), "V": ("Z", 1), "S": ("X", 0), "A": ("X", 1)}
_SPA_GROUP = {"b1": ("Z", 0), "b2": ("Z", 1), "s": ("X", 0), "a": ("X", 1)}


class UnsupportedAttackError(ValueError):
    """The attack has no finite branch tree for exact enumeration."""


def _dof_overlap2(a: str, b: str, groups: dict) -> Fraction:
    ga, ia = groups[a]
    gb, ib = groups[b]
    if ga == gb:
        return Fraction(1 if ia == ib else 0)
    return Fraction(1, 2)  # any Z ket against any X ket


def ket_overlap2(label_a: str, label_b: str) -> Fraction:
    """|<a|b>|^2 between two named product kets, exactly."""
    pa, sa = parse_ket_label(label_a)
    pb, sb = parse_ket_label(label_b)
    return _dof_overlap2(pa, pb, _POL_GROUP) * _dof_overlap2(sa, sb, _SPA_GROUP)


# A branch state is either a ket label or a raw amplitude vector.
State = Union[str, np.ndarray]


def _outcome_prob(state: State, basis: ProductBasis, index: int) -> Prob:
    p, s = basis.ket_labels[index]
    target = p + s
    if isinstance(state, str):
        return ket_overlap2(state, target)
    amp = complex(np.vdot(ket(target).amps, state))
    return abs(amp) ** 2


def _forward_branches(attack: AttackModel) -> list[tuple[Prob, State, int | None]]:
    """Branches after Eve's forward tap: (probability, state to Bob, Eve guess)."""
    prepared = "Ss"
    if isinstance(attack, NoAttack):
        return [(Fraction(1), prepared, None)]
    if isinstance(attack, InterceptResend):
        if isinstance(attack.fake, FixedState):
            lbl = state_label(attack.fake.state)
            st: State = lbl if lbl is not None else attack.fake.state.amps
            return [(Fraction(1), st, None)]
        return [
            (w if isinstance(w, Fraction) else float(w), KET_ORDER[k], None)
            for k, w in enumerate(attack.fake.weights)
            if w != 0
        ]
    if isinstance(attack, MeasureResend):
        if isinstance(attack.policy, FixedBasis):
            bases = [(Fraction(1), attack.policy.basis)]
        else:
            bases = [(Fraction(1, 4), b) for b in ALL_BASES]
        out: list[tuple[Prob, State, int | None]] = []
        for bp, basis in bases:
            for i in range(4):
                q = _outcome_prob(prepared, basis, i)
                if q == 0:
                    continue
                p, s = basis.ket_labels[i]
                guess = i if basis == BASIS_ZZ else None
                out.append((bp * q, p + s, guess))
        return out
    raise UnsupportedAttackError(
        f"exact enumeration does not cover {type(attack).__name__}; "
        "use probe_independence_check for entangle-measure attacks"
    )


def _backward_branches(attack: AttackModel, state: State) -> list[tuple[Prob, State, int | None]]:
    """Branches after Eve's return-leg tap: (probability, state to Alice, guess)."""
    if isinstance(attack, InterceptResend) and attack.backward == BACKWARD_MEASURE_ZZ:
        out = []
        for m in range(4):
            q = _outcome_prob(state, BASIS_ZZ, m)
            if q == 0:
                continue
            p, s = BASIS_ZZ.ket_labels[m]
            out.append((q, p + s, m))
        return out
    return [(Fraction(1), state, None)]


@dataclass(frozen=True)
class ExactDetection:
    """Per-round detection probabilities from exhaustive branch enumeration."""

    ctrl_detection: Prob
    sift_mismatch: Prob
    sift_alice_distribution: tuple[Prob, Prob, Prob, Prob]
    sift_tv_distance: Prob

    def as_floats(self) -> dict:
        return {
            "ctrl_detection": float(self.ctrl_detection),
            "sift_mismatch": float(self.sift_mismatch),
            "sift_alice_distribution": [float(p) for p in self.sift_alice_distribution],
            "sift_tv_distance": float(self.sift_tv_distance),
        }


def exact_detection(attack: AttackModel) -> ExactDetection:
    """Exact per-mode detection probabilities for a finite-branch attack.

    CTRL detection is the probability that Alice's diagonal measurement of a
    reflected round misses the prepared state; SIFT mismatch is the
    probability her computational result differs from Bob's.  The Alice
    outcome distribution over measured rounds is also returned, with its
    total-variation distance from uniform (the signature of attacks that
    never cause a mismatch but skew the outcomes).
    """
    ctrl, mismatch, dist, _ = _enumerate(attack)
    quarter = Fraction(1, 4)
    tv = sum(abs(d - quarter) for d in dist) / 2
    return ExactDetection(ctrl, mismatch, tuple(dist), tv)


def exact_eve_key_joint(attack: AttackModel) -> dict[tuple[int | None, int], Prob]:
    """Exact joint distribution of (Eve's key guess, Bob's key symbol) per round."""
    _, _, _, joint = _enumerate(attack)
    return joint


def exact_eve_information(attack: AttackModel) -> float:
    """Mutual information (bits per key photon) of the exact guess/symbol joint."""
    joint = exact_eve_key_joint(attack)
    scale = 1
    for p in joint.values():
        if isinstance(p, Fraction):
            scale = scale * p.denominator // math.gcd(scale, p.denominator)
    counts = {k: int(p * scale) if isinstance(p, Fraction) else p * scale for k, p in joint.items()}
    return mutual_information_bits(counts)


def _enumerate(attack: AttackModel):
    zero = Fraction(0)
    ctrl_detection: Prob = zero
    mismatch: Prob = zero
    dist: list[Prob] = [zero, zero, zero, zero]
    joint: dict[tuple[int | None, int], Prob] = {}
    ss_index = BASIS_XX.index_of("S", "s")

    for fp, fstate, fguess in _forward_branches(attack):
        # Reflected rounds: Bob returns the state unchanged.
        for bp, bstate, _ in _backward_branches(attack, fstate):
            miss = 1 - _outcome_prob(bstate, BASIS_XX, ss_index)
            ctrl_detection += fp * bp * miss
        # Measured rounds: Bob collapses, resends his result.
        for j in range(4):
            q = _outcome_prob(fstate, BASIS_ZZ, j)
            if q == 0:
                continue
            pj, sj = BASIS_ZZ.ket_labels[j]
            resent = pj + sj
            for bp, bstate, bguess in _backward_branches(attack, resent):
                w = fp * q * bp
                guess = fguess if fguess is not None else bguess
                key = (guess, j)
                joint[key] = joint.get(key, zero) + w
                for k in range(4):
                    a = _outcome_prob(bstate, BASIS_ZZ, k)
                    if a == 0:
                        continue
                    dist[k] += w * a
                    if k != j:
                        mismatch += w * a

    total = sum(dist)
    if abs(float(total) - 1.0) > 1e-9:
        raise AssertionError(f"branch probabilities lost mass: SIFT total {float(total)!r}")
    return ctrl_detection, mismatch, dist, joint
