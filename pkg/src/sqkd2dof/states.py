"""Exact state vectors for a single photon carrying two degrees of freedom.

The photon carries a polarization qubit (horizontal ``H`` / vertical ``V``)
and a spatial-mode qubit (upper path ``b1`` / lower path ``b2``).  Amplitude
vectors are always ordered over the product basis

    (|H b1>, |H b2>, |V b1>, |V b2>)

i.e. polarization-major.  The diagonal states are

    |S> = (|H> + |V>)/sqrt(2),   |A> = (|H> - |V>)/sqrt(2)
    |s> = (|b1> + |b2>)/sqrt(2), |a> = (|b1> - |b2>)/sqrt(2)

Measurements are projective (Born rule) in one of the four product bases
``Z x Z``, ``Z x X``, ``X x Z``, ``X x X``, where ``Z`` is the computational
basis of a degree of freedom and ``X`` its diagonal basis.  Collapse returns
the observed basis ket itself, which for rank-1 projectors is equivalent to
renormalizing the projection.

Global phase is physically unobservable; states are compared through
overlap magnitudes only.

Joint photon-probe states (for eavesdropper analysis) are stored photon-major:
entry ``4*k + j`` is the amplitude of photon ket ``k`` with probe ket ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .rng import RandomSource

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
PROBE_PROB_FLOOR = 1e-14

POL_LABELS = ("H", "V", "S", "A")
SPA_LABELS = ("b1", "b2", "s", "a")

_R = math.sqrt(0.5)
_POL_VECS = {"H": (1.0, 0.0), "V": (0.0, 1.0), "S": (_R, _R), "A": (_R, -_R)}
_SPA_VECS = {"b1": (1.0, 0.0), "b2": (0.0, 1.0), "s": (_R, _R), "a": (_R, -_R)}


def _exact_product(a: float, b: float) -> float:
    # Entries of named kets are products of {0, +-1, +-1/sqrt(2)}; snap the
    # float rounding of (1/sqrt(2))^2 back to the true dyadic value.
    v = a * b
    for exact in (0.0, 0.5, -0.5, 1.0, -1.0):
        if abs(v - exact) < 1e-15:
            return exact
    return v


@dataclass(frozen=True, eq=False)
class PhotonState:
    """Unit-norm 4-amplitude state of one photon in both degrees of freedom."""

    amps: np.ndarray

    def __post_init__(self):
        arr = np.array(self.amps, dtype=np.complex128)
        if arr.shape != (4,):
            raise ValueError(f"expected 4 amplitudes, got shape {arr.shape}")
        if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
            raise ValueError("amplitudes must be finite")
        norm_sq = float(np.sum(arr.real**2 + arr.imag**2))
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized: sum |amp|^2 = {norm_sq!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "amps", arr)

    def overlap(self, other: "PhotonState") -> complex:
        """Inner product <self|other>."""
        return complex(np.vdot(self.amps, other.amps))

    def fidelity(self, other: "PhotonState") -> float:
        """|<self|other>|^2 — phase-insensitive agreement in [0, 1]."""
        return abs(self.overlap(other)) ** 2

    def __repr__(self) -> str:
        return f"PhotonState({np.array2string(self.amps, precision=4)})"


@lru_cache(maxsize=None)
def ket(pol: str, spa: str | None = None) -> PhotonState:
    """Named product ket, e.g. ``ket("H", "b1")`` or the compact ``ket("Ss")``.

    Valid labels are {H, V, S, A} for polarization and {b1, b2, s, a} for the
    spatial mode.
    """
    if spa is None:
        pol, spa = parse_ket_label(pol)
        return ket(pol, spa)
    if pol not in _POL_VECS or spa not in _SPA_VECS:
        raise ValueError(f"unknown ket label {pol!r} x {spa!r}")
    p, q = _POL_VECS[pol], _SPA_VECS[spa]
    amps = [_exact_product(p[i], q[j]) for i in (0, 1) for j in (0, 1)]
    return PhotonState(np.array(amps, dtype=np.complex128))


def parse_ket_label(label: str) -> tuple[str, str]:
    """Split a compact label like ``"Hb1"`` or ``"Ss"`` into (pol, spa)."""
    if len(label) >= 2 and label[0] in POL_LABELS and label[1:] in SPA_LABELS:
        return label[0], label[1:]
    raise ValueError(f"unknown ket label {label!r}")


def product_state(pol_amps, spa_amps) -> PhotonState:
    """Separable state from arbitrary unit 2-vectors (polarization x spatial)."""
    p = np.asarray(pol_amps, dtype=np.complex128)
    q = np.asarray(spa_amps, dtype=np.complex128)
    if p.shape != (2,) or q.shape != (2,):
        raise ValueError("each degree of freedom takes exactly 2 amplitudes")
    return PhotonState(np.kron(p, q))


@dataclass(frozen=True)
class ProductBasis:
    """Measurement basis: a polarization basis (Z or X) times a spatial one.

    The four kets are ordered (pol0 x spa0, pol0 x spa1, pol1 x spa0,
    pol1 x spa1), where pol0 is H for Z and S for X, and spa0 is b1 for Z and
    s for X.
    """

    pol: str
    spa: str

    def __post_init__(self):
        if self.pol not in ("Z", "X") or self.spa not in ("Z", "X"):
            raise ValueError(f"basis letters must be Z or X, got {self.pol!r}, {self.spa!r}")

    @property
    def name(self) -> str:
        return f"{self.pol}p{self.spa}s"

    @property
    def ket_labels(self) -> tuple[tuple[str, str], ...]:
        pols = ("H", "V") if self.pol == "Z" else ("S", "A")
        spas = ("b1", "b2") if self.spa == "Z" else ("s", "a")
        return tuple((p, q) for p in pols for q in spas)

    @property
    def vectors(self) -> tuple[PhotonState, ...]:
        return _basis_vectors(self)

    @property
    def bra_matrix(self) -> np.ndarray:
        """4x4 matrix whose row i is <ket_i| (conjugated amplitudes)."""
        return _bra_matrix(self)

    def index_of(self, pol: str, spa: str) -> int:
        return self.ket_labels.index((pol, spa))

    def __str__(self) -> str:
        return self.name


@lru_cache(maxsize=None)
def _basis_vectors(basis: ProductBasis) -> tuple[PhotonState, ...]:
    return tuple(ket(p, q) for p, q in basis.ket_labels)


@lru_cache(maxsize=None)
def _bra_matrix(basis: ProductBasis) -> np.ndarray:
    mat = np.conj(np.stack([v.amps for v in basis.vectors]))
    mat.setflags(write=False)
    return mat


BASIS_ZZ = ProductBasis("Z", "Z")
BASIS_ZX = ProductBasis("Z", "X")
BASIS_XZ = ProductBasis("X", "Z")
BASIS_XX = ProductBasis("X", "X")
ALL_BASES = (BASIS_ZZ, BASIS_ZX, BASIS_XZ, BASIS_XX)
_BASES_BY_NAME = {"ZZ": BASIS_ZZ, "ZX": BASIS_ZX, "XZ": BASIS_XZ, "XX": BASIS_XX}


def basis_from_name(name: str) -> ProductBasis:
    """Look up a basis by short name ("ZZ", "ZX", "XZ", "XX")."""
    key = name.replace("p", "").replace("s", "") if len(name) == 4 else name
    if key not in _BASES_BY_NAME:
        raise ValueError(f"unknown basis {name!r}; expected one of {sorted(_BASES_BY_NAME)}")
    return _BASES_BY_NAME[key]


def basis_vectors(basis: ProductBasis) -> tuple[PhotonState, ...]:
    """The four orthonormal kets of a product basis, in documented order."""
    return basis.vectors


@dataclass(frozen=True)
class Outcome:
    """Result of a projective measurement: which ket of which basis was seen."""

    basis: ProductBasis
    index: int

    def __post_init__(self):
        if not 0 <= self.index <= 3:
            raise ValueError(f"outcome index must be 0..3, got {self.index}")

    @property
    def state(self) -> PhotonState:
        return self.basis.vectors[self.index]

    @property
    def label(self) -> str:
        p, q = self.basis.ket_labels[self.index]
        return p + q

    @property
    def key_bits(self) -> int:
        """Two-bit key value of a computational-basis outcome (Hb1=0 .. Vb2=3)."""
        if self.basis != BASIS_ZZ:
            raise ValueError("key bits are defined only for ZpZs outcomes")
        return self.index


def born_probabilities(state: PhotonState, basis: ProductBasis) -> np.ndarray:
    """Born-rule probabilities |<ket_i|state>|^2 for the four basis kets."""
    amp = basis.bra_matrix @ state.amps
    return amp.real**2 + amp.imag**2


# States are immutable and the protocol re-measures a handful of fixed states
# millions of times, so probabilities and outcome objects are memoized.
# PhotonState hashes by identity; value-equal duplicates just miss the cache.
@lru_cache(maxsize=4096)
def _born_probs_cached(state: PhotonState, basis: ProductBasis) -> tuple[float, float, float, float]:
    amp = basis.bra_matrix @ state.amps
    return tuple((amp.real**2 + amp.imag**2).tolist())


@lru_cache(maxsize=None)
def _outcome_cached(basis: ProductBasis, index: int) -> "Outcome":
    return Outcome(basis, index)


def branch_index(probs, u: float) -> int:
    """Pick the branch whose cumulative probability window contains ``u``.

    ``probs`` must (approximately) sum to 1 and ``u`` lie in [0, 1).  If
    rounding leaves the total just below ``u``, the most probable branch wins.
    """
    acc = 0.0
    for j, p in enumerate(probs):
        acc += p
        if u < acc:
            return j
    return max(range(len(probs)), key=probs.__getitem__)


def measure(state: PhotonState, basis: ProductBasis, rng: RandomSource) -> tuple[Outcome, PhotonState]:
    """Projective measurement; returns the outcome and the collapsed ket."""
    return measure_with_uniform(state, basis, rng.generator().random())


def measure_with_uniform(state: PhotonState, basis: ProductBasis, u: float) -> tuple[Outcome, PhotonState]:
    """Measurement with a caller-supplied uniform [0,1) variate (hot path)."""
    probs = _born_probs_cached(state, basis)
    idx = branch_index(probs, u)
    return _outcome_cached(basis, idx), basis.vectors[idx]


@dataclass(frozen=True, eq=False)
class JointState:
    """Unit-norm photon x probe state, photon-major amplitude layout."""

    dim_probe: int
    amps: np.ndarray

    def __post_init__(self):
        if self.dim_probe < 1:
            raise ValueError("probe dimension must be positive")
        arr = np.array(self.amps, dtype=np.complex128)
        if arr.shape != (4 * self.dim_probe,):
            raise ValueError(f"expected {4 * self.dim_probe} amplitudes, got shape {arr.shape}")
        if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
            raise ValueError("amplitudes must be finite")
        norm_sq = float(np.sum(arr.real**2 + arr.imag**2))
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValueError(f"joint state is not normalized: sum |amp|^2 = {norm_sq!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "amps", arr)

    def photon_matrix(self) -> np.ndarray:
        """View as a 4 x d matrix: row k is photon ket k's probe component."""
        return self.amps.reshape(4, self.dim_probe)


def tensor(photon: PhotonState, probe) -> JointState:
    """Product state photon x probe; the probe must be a unit vector."""
    eps = np.asarray(probe, dtype=np.complex128).reshape(-1)
    if eps.size < 1:
        raise ValueError("probe vector must be non-empty")
    norm_sq = float(np.sum(eps.real**2 + eps.imag**2))
    if norm_sq == 0.0:
        raise ValueError("probe vector must be nonzero")
    if abs(norm_sq - 1.0) > NORM_TOL:
        raise ValueError(f"probe vector is not normalized: sum |amp|^2 = {norm_sq!r}")
    return JointState(eps.size, np.kron(photon.amps, eps))


def unitarity_residual(u: np.ndarray) -> float:
    """max |U^dagger U - I|, the deviation from unitarity."""
    u = np.asarray(u, dtype=np.complex128)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def require_unitary(u: np.ndarray, dim: int | None = None, what: str = "matrix") -> np.ndarray:
    """Validate a square unitary (residual <= 1e-10) and return it as complex."""
    arr = np.asarray(u, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{what} must be square, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{what} must be {dim}x{dim}, got shape {arr.shape}")
    res = unitarity_residual(arr)
    if res > UNITARY_TOL:
        raise ValueError(f"{what} is not unitary: residual {res:.3e} exceeds {UNITARY_TOL}")
    return arr


def apply_unitary(joint: JointState, u: np.ndarray) -> JointState:
    """Evolve the joint state by a (4d)x(4d) unitary."""
    mat = require_unitary(u, dim=4 * joint.dim_probe, what="joint unitary")
    return JointState(joint.dim_probe, mat @ joint.amps)


def conditional_probe_states(
    joint: JointState, basis: ProductBasis
) -> list[tuple[float, np.ndarray | None]]:
    """Decompose a joint state over photon basis kets.

    Entry i is ``(p_i, probe_i)`` where p_i is the probability of photon
    outcome i and probe_i the normalized probe state left behind, or None when
    p_i < 1e-14.  Probabilities sum to 1.
    """
    rows = basis.bra_matrix @ joint.photon_matrix()
    out: list[tuple[float, np.ndarray | None]] = []
    for k in range(4):
        row = rows[k]
        p = float(np.sum(row.real**2 + row.imag**2))
        if p < PROBE_PROB_FLOOR:
            out.append((p, None))
        else:
            out.append((p, row / math.sqrt(p)))
    return out


def measure_photon(joint: JointState, basis: ProductBasis, rng: RandomSource) -> tuple[Outcome, JointState]:
    """Measure the photon subsystem only; the probe collapses alongside it."""
    return measure_photon_with_uniform(joint, basis, rng.generator().random())


def measure_photon_with_uniform(joint: JointState, basis: ProductBasis, u: float) -> tuple[Outcome, JointState]:
    """Photon-subsystem measurement with a caller-supplied uniform variate."""
    rows = basis.bra_matrix @ joint.photon_matrix()
    probs = np.sum(rows.real**2 + rows.imag**2, axis=1).tolist()
    idx = branch_index(probs, u)
    probe = rows[idx] / math.sqrt(probs[idx])
    collapsed = JointState(joint.dim_probe, np.kron(basis.vectors[idx].amps, probe))
    return Outcome(basis, idx), collapsed


def trace_distance(probe_a, probe_b) -> float:
    """Pure-state trace distance sqrt(1 - |<a|b>|^2) between unit vectors."""
    a = np.asarray(probe_a, dtype=np.complex128).reshape(-1)
    b = np.asarray(probe_b, dtype=np.complex128).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norms = []
    for name, v in (("first", a), ("second", b)):
        norm_sq = float(np.vdot(v, v).real)
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValueError(f"{name} vector is not normalized: sum |amp|^2 = {norm_sq!r}")
        norms.append(norm_sq)
    # Divide by norms computed with the same vdot so identical vectors overlap
    # to exactly 1 and yield distance exactly 0 despite norm rounding.
    overlap_sq = abs(complex(np.vdot(a, b))) ** 2 / (norms[0] * norms[1])
    return math.sqrt(max(0.0, 1.0 - min(overlap_sq, 1.0)))
