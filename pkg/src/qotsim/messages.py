"""Message databases for the protocol family.

A database holds the f message states a pair of servers can regenerate at
will, in one of five flavors: real qubit pure states (one angle each), real
qudit pure states (d-1 angles each), vectorizations of pairwise commuting
unitaries, general complex pure states (angle records), and general mixed
states (density operators).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, params

REAL_QUBIT = "real_qubit_pure"
REAL_QUDIT = "real_qudit_pure"
COMMUTING = "commuting_unitary"
COMPLEX_PURE = "complex_pure"
MIXED = "mixed"

KINDS = (REAL_QUBIT, REAL_QUDIT, COMMUTING, COMPLEX_PURE, MIXED)

COMMUTE_TOL = 1e-9


class NonCommutingPayloadError(ValueError):
    pass


class InvariantViolationError(ValueError):
    """A message fails its kind's validity requirement; carries the index."""

    def __init__(self, index: int, reason: str):
        self.index = index
        super().__init__(f"message {index}: {reason}")


@dataclass(frozen=True)
class QueryPair:
    """The two query bit strings; they differ exactly at the target index."""

    q: tuple[int, ...]
    q_prime: tuple[int, ...]


def build_query(f: int, k: int, rng: np.random.Generator) -> QueryPair:
    """Uniform q in {0,1}^f and q' flipped at the (1-indexed) target k."""
    if not 1 <= k <= f:
        raise linalg.IndexOutOfRangeError(f"target index {k} outside [1, {f}]")
    q = tuple(int(b) for b in rng.integers(0, 2, size=f))
    qp = tuple(b ^ 1 if i == k - 1 else b for i, b in enumerate(q))
    return QueryPair(q=q, q_prime=qp)


@dataclass
class MessageDB:
    """f message states of one kind on a d-dimensional system."""

    kind: str
    d: int
    f: int
    payload: list

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if len(self.payload) != self.f:
            raise ValueError(f"payload has {len(self.payload)} entries for f={self.f}")
        validator = {
            REAL_QUBIT: self._check_real_qubit,
            REAL_QUDIT: self._check_real_qudit,
            COMMUTING: self._check_commuting,
            COMPLEX_PURE: self._check_complex_pure,
            MIXED: self._check_mixed,
        }[self.kind]
        validator()

    # -- validation ----------------------------------------------------------

    def _check_real_qubit(self):
        if self.d != 2:
            raise ValueError("real qubit messages need d = 2")
        self.payload = [float(a) for a in self.payload]

    def _check_real_qudit(self):
        clean = []
        for i, thetas in enumerate(self.payload):
            thetas = tuple(float(t) for t in thetas)
            if len(thetas) != self.d - 1:
                raise InvariantViolationError(i, f"needs {self.d - 1} angles, got {len(thetas)}")
            clean.append(thetas)
        self.payload = clean

    def _check_commuting(self):
        ops = [linalg.as_matrix(u) for u in self.payload]
        for i, u in enumerate(ops):
            if u.shape != (self.d, self.d):
                raise InvariantViolationError(i, f"unitary shape {u.shape} != ({self.d},{self.d})")
            if not linalg.is_unitary(u):
                raise InvariantViolationError(i, "not unitary")
        for i in range(len(ops)):
            for j in range(i + 1, len(ops)):
                if np.abs(ops[i] @ ops[j] - ops[j] @ ops[i]).max() > COMMUTE_TOL:
                    raise NonCommutingPayloadError(f"messages {i} and {j} do not commute")
        self.payload = ops

    def _check_complex_pure(self):
        clean = []
        for i, p in enumerate(self.payload):
            if not isinstance(p, params.PureParams):
                raise InvariantViolationError(i, "expected a PureParams record")
            if p.d != self.d:
                raise InvariantViolationError(i, f"params dimension {p.d} != {self.d}")
            clean.append(p)
        self.payload = clean

    def _check_mixed(self):
        clean = []
        for i, rho in enumerate(self.payload):
            rho = linalg.as_matrix(rho)
            if rho.shape != (self.d, self.d):
                raise InvariantViolationError(i, f"density shape {rho.shape}")
            if not linalg.is_density(rho):
                raise InvariantViolationError(i, "not a valid density operator")
            clean.append(rho)
        self.payload = clean

    # -- views ---------------------------------------------------------------

    def state(self, ell: int) -> np.ndarray:
        """Message state (vector for pure kinds, density matrix for mixed), 1-indexed."""
        item = self.payload[ell - 1]
        if self.kind == REAL_QUBIT:
            return linalg.rotation(item) @ linalg.ket(0, 2)
        if self.kind == REAL_QUDIT:
            return linalg.composed_rotation(item, self.d) @ linalg.ket(0, self.d)
        if self.kind == COMMUTING:
            return linalg.vectorize(item)
        if self.kind == COMPLEX_PURE:
            return item.state()
        return item

    def thetas(self, ell: int) -> tuple[float, ...]:
        if self.kind == REAL_QUBIT:
            return (self.payload[ell - 1],)
        if self.kind == REAL_QUDIT:
            return self.payload[ell - 1]
        if self.kind == COMPLEX_PURE:
            return self.payload[ell - 1].thetas
        raise ValueError(f"{self.kind} messages have no rotation angles")

    def phis(self, ell: int) -> tuple[float, ...]:
        if self.kind == COMPLEX_PURE:
            return self.payload[ell - 1].phis
        raise ValueError(f"{self.kind} messages have no phase angles")


# ---------------------------------------------------------------------------
# random databases (documented ensembles used by checkers and defaults)

def random_db(kind: str, d: int, f: int, rng: np.random.Generator) -> MessageDB:
    """Random database of the given kind.

    Rotation angles are uniform on [0, pi/2] and phases uniform on [0, 2 pi),
    matching the pure-state angle record's ranges; commuting payloads are
    random powers of the d-dim clock matrix times random diagonal phases;
    mixed states are normalized Wishart matrices.
    """
    if kind == REAL_QUBIT:
        return MessageDB(kind, 2, f, [float(a) for a in rng.uniform(0, np.pi / 2, size=f)])
    if kind == REAL_QUDIT:
        return MessageDB(kind, d, f, [tuple(rng.uniform(0, np.pi / 2, size=d - 1)) for _ in range(f)])
    if kind == COMMUTING:
        z = linalg.gen_pauli_z(d)
        ops = []
        for _ in range(f):
            power = int(rng.integers(0, d))
            extra = np.exp(1j * rng.uniform(0, 2 * np.pi))
            ops.append(extra * np.linalg.matrix_power(z, power))
        return MessageDB(kind, d, f, ops)
    if kind == COMPLEX_PURE:
        recs = []
        for _ in range(f):
            thetas = tuple(rng.uniform(0, np.pi / 2, size=d - 1))
            phis = tuple(rng.uniform(0, 2 * np.pi, size=d - 1))
            recs.append(params.PureParams(d=d, thetas=thetas, phis=phis))
        return MessageDB(kind, d, f, recs)
    if kind == MIXED:
        rhos = []
        for _ in range(f):
            g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            rho = g @ g.conj().T
            rhos.append(rho / np.trace(rho))
        return MessageDB(kind, d, f, rhos)
    raise ValueError(f"unknown message kind {kind!r}")


def random_state_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=d) + 1j * rng.normal(size=d)
    return g / np.linalg.norm(g)
