"""Dense complex linear algebra: operators and states used by the protocols.

All states and operators are plain ``numpy`` arrays of dtype complex128.
Vectors are 1-d arrays, operators 2-d row-major arrays.  Everything returned
by the constructors here is a fresh array; callers may treat results as
immutable and share them freely.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

# Structural predicates (unitarity, Kraus completeness, ...) hold to this
# tolerance for freshly constructed operators.
STRUCT_TOL = 1e-12
# Validation tolerance for externally supplied states/operators.
CHECK_TOL = 1e-10


class NonSquareInputError(ValueError):
    """Raised when a square matrix is required but a rectangular one given."""


class DimensionTooSmallError(ValueError):
    """Raised for qudit dimensions below 2."""


class IndexOutOfRangeError(ValueError):
    """Raised for a rotation-block or message index outside its valid range."""


# ---------------------------------------------------------------------------
# basic helpers

def as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    return m


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got ndim={v.ndim}")
    return v


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conjugate(np.asarray(m)).T


def ket(index: int, dim: int) -> np.ndarray:
    """Computational basis vector |index> in dimension ``dim``."""
    if not 0 <= index < dim:
        raise IndexOutOfRangeError(f"basis index {index} outside [0, {dim})")
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def proj(v: np.ndarray) -> np.ndarray:
    """Rank-one projector |v><v|."""
    v = as_vector(v)
    return np.outer(v, v.conj())


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of matrices (or vectors), left to right."""
    if not ops:
        raise ValueError("tensor() needs at least one argument")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


# ---------------------------------------------------------------------------
# predicates

def is_unitary(m: np.ndarray, tol: float = CHECK_TOL) -> bool:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    return bool(np.allclose(dagger(m) @ m, np.eye(m.shape[1]), atol=tol))


def is_isometry(m: np.ndarray, tol: float = CHECK_TOL) -> bool:
    """True when m^dagger m = I on the (smaller) input space."""
    m = as_matrix(m)
    return bool(np.allclose(dagger(m) @ m, np.eye(m.shape[1]), atol=tol))


def is_hermitian(m: np.ndarray, tol: float = CHECK_TOL) -> bool:
    m = as_matrix(m)
    return m.shape[0] == m.shape[1] and bool(np.allclose(m, dagger(m), atol=tol))


def is_psd(m: np.ndarray, tol: float = CHECK_TOL) -> bool:
    if not is_hermitian(m, tol):
        return False
    evals = np.linalg.eigvalsh((m + dagger(m)) / 2.0)
    return bool(evals.min() >= -tol)


def is_trace_one(m: np.ndarray, tol: float = CHECK_TOL) -> bool:
    m = as_matrix(m)
    return abs(np.trace(m) - 1.0) <= tol


def is_density(m: np.ndarray, tol: float = CHECK_TOL) -> bool:
    return is_psd(m, tol) and is_trace_one(m, tol)


def is_unit_vector(v: np.ndarray, tol: float = CHECK_TOL) -> bool:
    return abs(np.linalg.norm(as_vector(v)) - 1.0) <= tol


def kraus_complete(ops: Sequence[np.ndarray], tol: float = CHECK_TOL) -> bool:
    """True when sum_i K_i^dagger K_i = I."""
    ops = [as_matrix(k) for k in ops]
    acc = sum(dagger(k) @ k for k in ops)
    return bool(np.allclose(acc, np.eye(ops[0].shape[1]), atol=tol))


# ---------------------------------------------------------------------------
# vectorization and maximally entangled states

def vectorize(m: np.ndarray) -> np.ndarray:
    """Normalized bipartite vector whose amplitudes are the entries of ``m``.

    For a square d x d matrix M the result is
    (1/sqrt(d)) * sum_{s,t} M_st |s>|t>.  Rectangular input is rejected:
    the 1/sqrt(d) prefactor is only well defined in the square case, which
    is the only case the protocols use.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise NonSquareInputError(f"vectorize needs a square matrix, got {m.shape}")
    d = m.shape[0]
    return m.reshape(d * d) / math.sqrt(d)


def unvectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize` (square case)."""
    v = as_vector(v)
    d = math.isqrt(v.size)
    if d * d != v.size:
        raise NonSquareInputError(f"vector of size {v.size} is not d*d")
    return v.reshape(d, d) * math.sqrt(d)


def gen_pauli_x(d: int) -> np.ndarray:
    """Cyclic shift X_d = sum_s |s+1 mod d><s|."""
    if d < 2:
        raise DimensionTooSmallError(f"qudit dimension must be >= 2, got {d}")
    x = np.zeros((d, d), dtype=complex)
    for s in range(d):
        x[(s + 1) % d, s] = 1.0
    return x


def gen_pauli_z(d: int) -> np.ndarray:
    """Clock matrix Z_d = diag(1, w, ..., w^(d-1)), w = exp(2 pi i / d)."""
    if d < 2:
        raise DimensionTooSmallError(f"qudit dimension must be >= 2, got {d}")
    omega = np.exp(2j * np.pi * np.arange(d) / d)
    return np.diag(omega)


def max_entangled(d: int) -> np.ndarray:
    """|I_d>> = (1/sqrt(d)) sum_s |s,s>."""
    if d < 2:
        raise DimensionTooSmallError(f"qudit dimension must be >= 2, got {d}")
    return vectorize(np.eye(d, dtype=complex))


def bell_vector(a: int, b: int, d: int) -> np.ndarray:
    """Generalized Bell basis vector |X^a Z^b>> in dimension d*d."""
    xa = np.linalg.matrix_power(gen_pauli_x(d), a % d)
    zb = np.linalg.matrix_power(gen_pauli_z(d), b % d)
    return vectorize(xa @ zb)


def plus_state(d: int) -> np.ndarray:
    """Uniform superposition (1/sqrt(d)) sum_j |j>."""
    if d < 2:
        raise DimensionTooSmallError(f"qudit dimension must be >= 2, got {d}")
    return np.full(d, 1.0 / math.sqrt(d), dtype=complex)


# ---------------------------------------------------------------------------
# rotations and phase shifts

def rotation(theta: float) -> np.ndarray:
    """2x2 real rotation [[cos, -sin], [sin, cos]]."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def phase_shift(phi: float) -> np.ndarray:
    """2x2 phase shift diag(e^{-i phi/2}, e^{i phi/2}).

    Note: phase_shift(pi) equals the qubit Z only up to the global phase
    -i (phase_shift(pi) = diag(-i, i) = -i * Z).
    """
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def rotation_block(s: int, theta: float, d: int) -> np.ndarray:
    """d x d rotation acting on span{|s-1>, |s>}, identity elsewhere."""
    if d < 2:
        raise DimensionTooSmallError(f"qudit dimension must be >= 2, got {d}")
    if not 1 <= s <= d - 1:
        raise IndexOutOfRangeError(f"block index {s} outside [1, {d - 1}]")
    r = np.eye(d, dtype=complex)
    c, sn = math.cos(theta), math.sin(theta)
    r[s - 1, s - 1] = c
    r[s - 1, s] = -sn
    r[s, s - 1] = sn
    r[s, s] = c
    return r


def composed_rotation(thetas: Sequence[float], d: int) -> np.ndarray:
    """Product of block rotations, block d-1 with the first angle leftmost.

    composed_rotation((t1, ..., t_{d-1}), d) multiplies
    R_{d-1}(t1) @ R_{d-2}(t2) @ ... @ R_1(t_{d-1}), so the last angle acts
    first on the |0>,|1> block.  Applied to |0> this yields the amplitude
    pattern (cos t_{d-1}, sin t_{d-1} cos t_{d-2}, ..., sin t_{d-1}...sin t1).
    """
    thetas = list(thetas)
    if len(thetas) != d - 1:
        raise IndexOutOfRangeError(f"need {d - 1} angles for dimension {d}, got {len(thetas)}")
    out = np.eye(d, dtype=complex)
    for i, theta in enumerate(thetas):
        out = out @ rotation_block(d - 1 - i, theta, d)
    return out


def phase_diag(phis: Sequence[float], d: int) -> np.ndarray:
    """diag(1, e^{i phi1}, ..., e^{i phi_{d-1}}); all such matrices commute."""
    phis = list(phis)
    if len(phis) != d - 1:
        raise IndexOutOfRangeError(f"need {d - 1} phases for dimension {d}, got {len(phis)}")
    return np.diag(np.exp(1j * np.concatenate([[0.0], np.asarray(phis, dtype=float)])))


def t_unitary() -> np.ndarray:
    """4x4 unitary sending the qubit Bell basis to the computational basis.

    (|00>+|11>)/sqrt2 -> |00>,  (|10>-|01>)/sqrt2 -> |10>,
    (|00>-|11>)/sqrt2 -> |01>,  (|10>+|01>)/sqrt2 -> |11>.
    """
    s = 1.0 / math.sqrt(2.0)
    return np.array(
        [
            [s, 0, 0, s],
            [s, 0, 0, -s],
            [0, -s, s, 0],
            [0, s, s, 0],
        ],
        dtype=complex,
    )


def v_isometry(d: int) -> np.ndarray:
    """d^2 x d isometry with V|j> = |j>|j> (copy unitary restricted to |0>)."""
    if d < 2:
        raise DimensionTooSmallError(f"qudit dimension must be >= 2, got {d}")
    v = np.zeros((d * d, d), dtype=complex)
    for j in range(d):
        v[j * d + j, j] = 1.0
    return v


def kraus_pair(j: int) -> tuple[np.ndarray, np.ndarray]:
    """The two merge Kraus operators for step j, exactly as printed.

    Input space is (j+1)-dim tensor a qubit, output space is (j+2)-dim:

      F_{j,1} = (1+i)/sqrt2 * sum_{j'<j} |j'><j'|<u+|
                + 1/sqrt2 * (|j><j|<0| + |j+1><j|<1|)

    and F_{j,2} likewise with <u-|, where |u+-> = (|0> +- i|1>)/sqrt2.
    The pair is a complete instrument: F1^dag F1 + F2^dag F2 = I.
    """
    if j < 1:
        raise IndexOutOfRangeError(f"merge step index must be >= 1, got {j}")
    din, dout = j + 1, j + 2
    u_plus = np.array([1.0, 1j], dtype=complex) / math.sqrt(2.0)
    u_minus = np.array([1.0, -1j], dtype=complex) / math.sqrt(2.0)
    ops = []
    for u in (u_plus, u_minus):
        f = np.zeros((dout, 2 * din), dtype=complex)
        head = (1.0 + 1j) / math.sqrt(2.0)
        for jp in range(j):
            # row |jp>, input bra <jp| (x) <u|
            f[jp, 2 * jp: 2 * jp + 2] = head * u.conj()
        f[j, 2 * j + 0] = 1.0 / math.sqrt(2.0)      # |j><j| <0|
        f[j + 1, 2 * j + 1] = 1.0 / math.sqrt(2.0)  # |j+1><j| <1|
        ops.append(f)
    return ops[0], ops[1]
