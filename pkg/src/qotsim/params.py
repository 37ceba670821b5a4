"""State parameterizations and the canonical mixed-state decomposition.

Pure states are carried by angle records: a real unit vector equals
``composed_rotation(thetas)|0>`` and a general pure state equals
``phase_diag(phis) @ composed_rotation(thetas)|0>`` with thetas in
[0, pi/2] and phis in [0, 2 pi).

Mixed states are decomposed into d equal-weight pure components built from
a canonically ordered eigensystem, so that two parties computing the
decomposition independently obtain bit-for-bit identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg

# eigenvalues closer than this are treated as one degenerate eigenspace
DEGENERACY_TOL = 1e-8
# amplitudes below this have no well-defined phase
PHASE_TOL = 1e-12


class NonRealInputError(ValueError):
    pass


class NonUnitNormError(ValueError):
    pass


class NonHermitianError(ValueError):
    pass


class NonPSDError(ValueError):
    pass


@dataclass(frozen=True)
class PureParams:
    """Angle record for a pure qudit state: d-1 rotation and d-1 phase angles."""

    d: int
    thetas: tuple[float, ...]
    phis: tuple[float, ...]

    def __post_init__(self):
        if len(self.thetas) != self.d - 1 or len(self.phis) != self.d - 1:
            raise ValueError(f"need {self.d - 1} thetas and phis for dimension {self.d}")

    def state(self) -> np.ndarray:
        """Reconstruct the state vector S(phis) R(thetas) |0>."""
        base = linalg.composed_rotation(self.thetas, self.d) @ linalg.ket(0, self.d)
        return linalg.phase_diag(self.phis, self.d) @ base


def extract_real_angles(psi, d: int) -> tuple[float, ...]:
    """Invert composed_rotation(thetas)|0> = psi for a real unit vector.

    thetas[1:] are returned in [0, pi] (intermediate sines nonnegative) and
    thetas[0] carries the remaining sign freedom, so the round trip is exact
    for every real unit vector.
    """
    psi = np.asarray(psi)
    if np.iscomplexobj(psi) and np.abs(psi.imag).max() > 1e-12:
        raise NonRealInputError("state vector has nonreal entries")
    v = np.real(np.asarray(psi, dtype=float))
    if v.size != d:
        raise ValueError(f"vector of size {v.size} for dimension {d}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise NonUnitNormError(f"norm {np.linalg.norm(v)} != 1")
    thetas = []
    # angle order in the record: thetas[0] pairs with the deepest block
    for m in range(d - 2):
        tail = math.sqrt(max(0.0, float(np.dot(v[m + 1:], v[m + 1:]))))
        thetas.append(math.atan2(tail, float(v[m])))
    thetas.append(math.atan2(float(v[d - 1]), float(v[d - 2])))
    return tuple(reversed(thetas))


def reconstruct_real(thetas, d: int) -> np.ndarray:
    return np.real(linalg.composed_rotation(thetas, d) @ linalg.ket(0, d))


def extract_pure_params(psi, d: int) -> PureParams:
    """Angle record of a complex unit vector, thetas in [0, pi/2].

    The global phase is fixed by making the first amplitude real nonnegative
    (when it is not negligible); entry phases below PHASE_TOL are set to 0.
    """
    psi = np.asarray(psi, dtype=complex)
    if psi.size != d:
        raise ValueError(f"vector of size {psi.size} for dimension {d}")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise NonUnitNormError(f"norm {np.linalg.norm(psi)} != 1")
    if abs(psi[0]) > PHASE_TOL:
        psi = psi * (psi[0].conjugate() / abs(psi[0]))
    mags = np.abs(psi)
    thetas = []
    for m in range(d - 2):
        tail = math.sqrt(max(0.0, float(np.dot(mags[m + 1:], mags[m + 1:]))))
        thetas.append(math.atan2(tail, float(mags[m])))
    thetas.append(math.atan2(float(mags[d - 1]), float(mags[d - 2])))
    thetas = tuple(reversed(thetas))
    phis = tuple(
        float(np.angle(psi[s])) % (2.0 * math.pi) if mags[s] > PHASE_TOL else 0.0
        for s in range(1, d)
    )
    return PureParams(d=d, thetas=thetas, phis=phis)


# ---------------------------------------------------------------------------
# canonical eigensystem and equal-weight decomposition

@dataclass
class CanonicalEnsemble:
    """Canonically ordered eigensystem plus the equal-weight components.

    ``eigvals`` ascend (with multiplicity), ``eigvecs[:, i]`` is the i-th
    canonical eigenvector, and ``phis[:, j]`` the j-th equal-weight component
    sum_i omega^{ij} sqrt(p_i) |psi_i>; the mixture (1/d) sum_j |phi_j><phi_j|
    reconstructs the input state.
    """

    d: int
    eigvals: np.ndarray
    eigvecs: np.ndarray
    phis: np.ndarray = field(default=None)


def _echelon_basis(projector: np.ndarray, dim_expected: int) -> np.ndarray:
    """Unique orthonormal echelon basis of an eigenspace given its projector.

    Gram-Schmidt over the projected computational basis in index order;
    residuals with norm below DEGENERACY_TOL are dropped.  Each kept vector
    is scaled to make its first non-negligible entry positive real, which
    realizes strictly increasing leading indices.
    """
    d = projector.shape[0]
    vecs: list[np.ndarray] = []
    for r in range(d):
        v = projector[:, r].copy()
        for w in vecs:
            v -= np.vdot(w, v) * w
        nrm = np.linalg.norm(v)
        if nrm < DEGENERACY_TOL:
            continue
        v /= nrm
        lead = np.nonzero(np.abs(v) > DEGENERACY_TOL)[0]
        pivot = v[lead[0]] if lead.size else 1.0
        v *= pivot.conjugate() / abs(pivot)
        vecs.append(v)
        if len(vecs) == dim_expected:
            break
    if len(vecs) != dim_expected:
        raise NonPSDError(
            f"eigenspace echelonization found {len(vecs)} vectors, expected {dim_expected}"
        )
    return np.column_stack(vecs)


def canonicalize_spectral(eigvals: np.ndarray, eigvecs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Canonical (ascending, echelon-per-eigenspace) form of an eigensystem.

    The output depends only on the spectral projectors, so permuting the
    input columns (or re-mixing them within a degenerate eigenspace) leaves
    the result bit-for-bit unchanged: within each near-degenerate group the
    columns are first put in a canonical order before any floating-point
    accumulation.
    """
    eigvals = np.asarray(eigvals, dtype=float)
    eigvecs = np.asarray(eigvecs, dtype=complex)
    order = np.argsort(eigvals, kind="stable")
    # canonical tie-break: sort by value, then by column content
    keys = [tuple(np.round(np.concatenate([eigvecs[:, i].real, eigvecs[:, i].imag]), 12)) for i in order]
    order = [i for _, i in sorted(zip(keys, order), key=lambda t: (eigvals[t[1]], t[0]))]
    vals = eigvals[order]
    vecs = eigvecs[:, order]

    out_vals = []
    out_vecs = []
    i = 0
    n = vals.size
    while i < n:
        j = i + 1
        while j < n and vals[j] - vals[j - 1] <= DEGENERACY_TOL:
            j += 1
        group = list(range(i, j))
        proj = np.zeros((vecs.shape[0], vecs.shape[0]), dtype=complex)
        for g in group:
            proj += np.outer(vecs[:, g], vecs[:, g].conj())
        basis = _echelon_basis(proj, len(group))
        out_vecs.append(basis)
        out_vals.extend(vals[group])
        i = j
    return np.asarray(out_vals), np.column_stack(out_vecs)


def canonical_eigh(rho: np.ndarray) -> CanonicalEnsemble:
    """Canonically ordered eigensystem of a density operator.

    Eigenvalues ascend; inside each (near-)degenerate eigenspace the unique
    orthonormal echelon basis is used, so repeated runs and permuted
    eigensolver outputs give identical results.
    """
    rho = linalg.as_matrix(rho)
    if not linalg.is_hermitian(rho):
        raise NonHermitianError("input is not Hermitian within tolerance")
    vals, vecs = np.linalg.eigh((rho + linalg.dagger(rho)) / 2.0)
    if vals.min() < -1e-10:
        raise NonPSDError(f"negative eigenvalue {vals.min()}")
    cvals, cvecs = canonicalize_spectral(vals, vecs)
    return CanonicalEnsemble(d=rho.shape[0], eigvals=cvals, eigvecs=cvecs)


def phi_decomposition(ensemble: CanonicalEnsemble) -> CanonicalEnsemble:
    """Fill in the equal-weight components phi_j = sum_i omega^{ij} sqrt(p_i) psi_i."""
    d = ensemble.d
    omega = np.exp(2j * np.pi / d)
    roots = np.sqrt(np.clip(ensemble.eigvals, 0.0, None))
    phis = np.zeros((d, d), dtype=complex)
    for j in range(d):
        coeff = roots * omega ** (np.arange(d) * j)
        phis[:, j] = ensemble.eigvecs @ coeff
    ensemble.phis = phis
    return ensemble


def decompose_mixed(rho: np.ndarray) -> CanonicalEnsemble:
    """Canonical eigensystem plus equal-weight components of a density operator."""
    return phi_decomposition(canonical_eigh(rho))
