"""Joint-state evolution engine: registers, embedded operators, measurements.

A :class:`GlobalState` is an ordered collection of named registers together
with their joint quantum state.  The state is conceptually a density operator;
internally a pure state is kept as a state vector for speed until a mixed
component (a completely mixed decoy, a non-selective operation) forces the
density-matrix representation.  The fast path is unobservable through the API.

Measurement sampling uses cumulative-probability inversion over a fixed
outcome ordering, so runs are reproducible given the generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import CHECK_TOL, dagger

MERGE_TOL = 1e-9


class DuplicateLabelError(ValueError):
    pass


class UnknownLabelError(KeyError):
    pass


class InvalidDensityError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class NonIsometricOperatorError(ValueError):
    pass


class UnequalDimsError(ValueError):
    pass


class IncompleteInstrumentError(ValueError):
    pass


class EmptyKeepSetError(ValueError):
    pass


class NotMergeableStateError(ValueError):
    """The register pair is not in the pure product form a merge requires."""


class ImpossibleOutcomeError(ValueError):
    """A forced measurement outcome has (near-)zero probability."""


@dataclass(frozen=True)
class Register:
    name: str
    dim: int


class GlobalState:
    """Ordered registers plus their joint state (vector or density matrix)."""

    def __init__(self):
        self.registers: list[Register] = []
        self._vec: np.ndarray | None = np.ones(1, dtype=complex)
        self._rho: np.ndarray | None = None

    # -- bookkeeping -------------------------------------------------------

    @property
    def dim(self) -> int:
        return int(np.prod([r.dim for r in self.registers], dtype=np.int64)) if self.registers else 1

    @property
    def labels(self) -> list[str]:
        return [r.name for r in self.registers]

    def dims(self) -> tuple[int, ...]:
        return tuple(r.dim for r in self.registers)

    def index_of(self, label: str) -> int:
        for i, r in enumerate(self.registers):
            if r.name == label:
                return i
        raise UnknownLabelError(label)

    def dim_of(self, label: str) -> int:
        return self.registers[self.index_of(label)].dim

    def is_pure(self) -> bool:
        return self._vec is not None

    # -- representation switching -----------------------------------------

    def density(self) -> np.ndarray:
        """Full joint density matrix (copy-safe to read, do not mutate)."""
        if self._vec is not None:
            return np.outer(self._vec, self._vec.conj())
        return self._rho

    def vector(self) -> np.ndarray:
        """Joint state vector; only valid while the state is pure."""
        if self._vec is None:
            raise InvalidDensityError("state is mixed; no state-vector representation")
        return self._vec

    def _to_mixed(self) -> None:
        if self._vec is not None:
            self._rho = np.outer(self._vec, self._vec.conj())
            self._vec = None

    # -- construction ------------------------------------------------------

    def attach(self, label: str, dim: int, initial) -> None:
        """Append a register in the given initial state.

        ``initial`` may be a state vector (length dim), a density matrix
        (dim x dim), or the string "maximally_mixed".
        """
        if any(r.name == label for r in self.registers):
            raise DuplicateLabelError(label)
        if isinstance(initial, str):
            if initial != "maximally_mixed":
                raise ValueError(f"unknown initial state {initial!r}")
            initial = np.eye(dim, dtype=complex) / dim
        initial = np.asarray(initial, dtype=complex)
        if initial.ndim == 1:
            if initial.size != dim:
                raise DimensionMismatchError(f"vector of size {initial.size} for dim {dim}")
            if abs(np.linalg.norm(initial) - 1.0) > CHECK_TOL:
                raise InvalidDensityError("initial state vector is not normalized")
            if self._vec is not None:
                self._vec = np.kron(self._vec, initial)
            else:
                self._rho = np.kron(self._rho, np.outer(initial, initial.conj()))
        elif initial.ndim == 2:
            if initial.shape != (dim, dim):
                raise DimensionMismatchError(f"density of shape {initial.shape} for dim {dim}")
            if not linalg.is_density(initial):
                raise InvalidDensityError("initial density operator is not Hermitian PSD trace-1")
            self._to_mixed()
            self._rho = np.kron(self._rho, initial)
        else:
            raise InvalidDensityError("initial state must be a vector or a matrix")
        self.registers.append(Register(label, dim))

    def attach_pair(self, label_a: str, label_b: str, d: int) -> None:
        """Append two d-dim registers sharing |I_d>>."""
        if label_a == label_b:
            raise DuplicateLabelError(label_a)
        vec = linalg.max_entangled(d)
        for lbl in (label_a, label_b):
            if any(r.name == lbl for r in self.registers):
                raise DuplicateLabelError(lbl)
        if self._vec is not None:
            self._vec = np.kron(self._vec, vec)
        else:
            self._rho = np.kron(self._rho, np.outer(vec, vec.conj()))
        self.registers.append(Register(label_a, d))
        self.registers.append(Register(label_b, d))

    # -- operator embedding --------------------------------------------------

    def _axes(self, labels: list[str]) -> list[int]:
        idx = [self.index_of(lbl) for lbl in labels]
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate labels in {labels}")
        return idx

    def _apply_matrix(self, labels: list[str], op: np.ndarray, out: list[Register]) -> None:
        """Apply ``op`` on the selected registers, replacing them by ``out``.

        The selected registers are moved (logically) to the front, the operator
        acts there, and the output registers land at the selected block's
        position: for square ops the register table is unchanged; for
        shape-changing ops the outputs are appended at the end of the table.
        """
        sel = self._axes(labels)
        dims = self.dims()
        n = len(dims)
        sel_dim = int(np.prod([dims[i] for i in sel], dtype=np.int64))
        if op.shape[1] != sel_dim:
            raise DimensionMismatchError(
                f"operator expects input dim {op.shape[1]}, selected registers give {sel_dim}"
            )
        rest = [i for i in range(n) if i not in sel]
        rest_dim = int(np.prod([dims[i] for i in rest], dtype=np.int64)) if rest else 1
        out_dim = op.shape[0]
        square = op.shape[0] == op.shape[1]

        if self._vec is not None:
            psi = self._vec.reshape(dims) if n else self._vec.reshape(())
            psi = np.transpose(psi, sel + rest).reshape(sel_dim, rest_dim)
            psi = op @ psi
            if square:
                new_dims = [dims[i] for i in sel] + [dims[i] for i in rest]
                psi = psi.reshape(new_dims)
                inv = np.argsort(sel + rest)
                self._vec = np.transpose(psi, inv).reshape(-1)
            else:
                # outputs first, then the untouched rest; table updated below
                out_dims = [r.dim for r in out]
                psi = psi.reshape(out_dims + [dims[i] for i in rest])
                perm = list(range(len(out_dims), len(out_dims) + len(rest))) + list(range(len(out_dims)))
                self._vec = np.transpose(psi, perm).reshape(-1)
        else:
            rho = self._rho.reshape(dims + dims)
            order = sel + rest
            rho = np.transpose(rho, order + [n + i for i in order])
            rho = rho.reshape(sel_dim * rest_dim, sel_dim * rest_dim)
            big = np.kron(op, np.eye(rest_dim, dtype=complex))
            rho = big @ rho @ dagger(big)
            if square:
                new_dims = [dims[i] for i in order]
                rho = rho.reshape(new_dims + new_dims)
                inv = list(np.argsort(order))
                rho = np.transpose(rho, inv + [len(order) + i for i in inv])
                self._rho = rho.reshape(self.dim, self.dim)
            else:
                out_dims = [r.dim for r in out]
                full = out_dims + [dims[i] for i in rest]
                rho = rho.reshape(full + full)
                k = len(out_dims)
                perm = list(range(k, k + len(rest))) + list(range(k))
                rho = np.transpose(rho, perm + [len(full) + i for i in perm])
                newd = int(np.prod(full, dtype=np.int64))
                self._rho = rho.reshape(newd, newd)

        if not square:
            keep = [r for i, r in enumerate(self.registers) if i not in sel]
            self.registers = keep + list(out)

    def apply(self, labels, op: np.ndarray, out: list[tuple[str, int]] | None = None) -> None:
        """Embed a unitary/isometry on the named registers.

        For a square ``op`` the register table is unchanged.  For a
        shape-changing ``op`` (isometry or partial isometry), ``out`` names
        the replacement registers; they are appended at the end of the table.
        A partial isometry is accepted only if it preserves the norm of the
        actual state (checked), since on its support it acts isometrically.
        """
        labels = [labels] if isinstance(labels, str) else list(labels)
        op = linalg.as_matrix(op)
        square = op.shape[0] == op.shape[1]
        isometric = linalg.is_isometry(op)
        if not square:
            if out is None:
                raise ValueError("shape-changing operator needs explicit output registers")
            out_regs = [Register(name, dim) for name, dim in out]
            if int(np.prod([r.dim for r in out_regs], dtype=np.int64)) != op.shape[0]:
                raise DimensionMismatchError("output register dims do not match operator rows")
        else:
            out_regs = []
        if not isometric:
            # allow co-isometries (e.g. the inverse copy map) on their support
            if not linalg.is_isometry(dagger(op)):
                raise NonIsometricOperatorError("operator is neither isometric nor co-isometric")
        norm_before = self._norm()
        self._apply_matrix(labels, op, out_regs)
        if abs(self._norm() - norm_before) > 1e-9:
            raise NonIsometricOperatorError(
                "partial isometry applied outside its support (state norm not preserved)"
            )

    def _norm(self) -> float:
        if self._vec is not None:
            return float(np.linalg.norm(self._vec))
        return float(np.real(np.trace(self._rho)))

    # -- measurements --------------------------------------------------------

    def _outcome_probs(self, labels: list[str], kets: list[np.ndarray]) -> np.ndarray:
        """Probabilities of projecting the selected registers onto each ket."""
        sel = self._axes(labels)
        dims = self.dims()
        rest = [i for i in range(len(dims)) if i not in sel]
        sel_dim = int(np.prod([dims[i] for i in sel], dtype=np.int64))
        rest_dim = int(np.prod([dims[i] for i in rest], dtype=np.int64)) if rest else 1
        if self._vec is not None:
            psi = self._vec.reshape(dims)
            psi = np.transpose(psi, sel + rest).reshape(sel_dim, rest_dim)
            return np.array([float(np.linalg.norm(k.conj() @ psi) ** 2) for k in kets])
        rho = self._rho.reshape(dims + dims)
        order = sel + rest
        n = len(dims)
        rho = np.transpose(rho, order + [n + i for i in order]).reshape(
            sel_dim * rest_dim, sel_dim * rest_dim
        )
        probs = []
        for k in kets:
            kb = np.kron(k.conj().reshape(1, -1), np.eye(rest_dim, dtype=complex))
            probs.append(float(np.real(np.trace(kb @ rho @ dagger(kb)))))
        return np.array(probs)

    def _collapse(self, labels: list[str], ket: np.ndarray, prob: float, remove: bool) -> None:
        """Project the selected registers onto ``ket`` and renormalize.

        With ``remove`` the measured registers leave the table; otherwise they
        stay behind in the (product) post-measurement basis state.
        """
        sel = self._axes(labels)
        dims = self.dims()
        rest = [i for i in range(len(dims)) if i not in sel]
        sel_dim = int(np.prod([dims[i] for i in sel], dtype=np.int64))
        rest_dim = int(np.prod([dims[i] for i in rest], dtype=np.int64)) if rest else 1
        if self._vec is not None:
            psi = self._vec.reshape(dims)
            psi = np.transpose(psi, sel + rest).reshape(sel_dim, rest_dim)
            collapsed = (ket.conj() @ psi) / math.sqrt(prob)
            if remove:
                self._vec = collapsed.reshape(-1)
            else:
                self._vec = np.kron(collapsed.reshape(-1), ket)
        else:
            rho = self._rho.reshape(dims + dims)
            order = sel + rest
            n = len(dims)
            rho = np.transpose(rho, order + [n + i for i in order]).reshape(
                sel_dim * rest_dim, sel_dim * rest_dim
            )
            kb = np.kron(ket.conj().reshape(1, -1), np.eye(rest_dim, dtype=complex))
            reduced = (kb @ rho @ dagger(kb)) / prob
            if remove:
                self._rho = reduced
            else:
                self._rho = np.kron(reduced, np.outer(ket, ket.conj()))
        keep = [r for i, r in enumerate(self.registers) if i not in sel]
        if remove:
            self.registers = keep
        else:
            self.registers = keep + [self.registers[i] for i in sel]

    @staticmethod
    def _sample(probs: np.ndarray, rng: np.random.Generator, force: int | None) -> tuple[int, float]:
        total = probs.sum()
        if abs(total - 1.0) > 1e-8:
            raise InvalidDensityError(f"outcome probabilities sum to {total}")
        if force is not None:
            if probs[force] < 1e-12:
                raise ImpossibleOutcomeError(f"forced outcome {force} has probability {probs[force]}")
            return force, float(probs[force])
        u = rng.random() * total
        acc = 0.0
        for i, p in enumerate(probs):
            acc += p
            if u <= acc:
                return i, float(p)
        return len(probs) - 1, float(probs[-1])

    def measure_computational(
        self,
        label: str,
        rng: np.random.Generator,
        remove: bool = True,
        force: int | None = None,
    ) -> tuple[int, float]:
        """Born-rule computational measurement of one register.

        Returns (outcome, probability).  The measured register is dropped
        from the table unless ``remove=False`` keeps it in the collapsed
        basis state.
        """
        d = self.dim_of(label)
        kets = [linalg.ket(i, d) for i in range(d)]
        probs = self._outcome_probs([label], kets)
        i, p = self._sample(probs, rng, force)
        self._collapse([label], kets[i], p, remove)
        return i, p

    def measure_bell(
        self,
        label_pair: tuple[str, str],
        rng: np.random.Generator,
        force: tuple[int, int] | None = None,
    ) -> tuple[tuple[int, int], float]:
        """Generalized Bell measurement {|X^a Z^b>>} of two equal-dim registers.

        The first label of the pair is the row side of the vectorization.
        Both registers are removed from the table.  Returns ((a, b), prob).
        """
        la, lb = label_pair
        d = self.dim_of(la)
        if self.dim_of(lb) != d:
            raise UnequalDimsError(f"{la} has dim {d}, {lb} has dim {self.dim_of(lb)}")
        kets = [linalg.bell_vector(a, b, d) for a in range(d) for b in range(d)]
        probs = self._outcome_probs([la, lb], kets)
        fidx = None if force is None else force[0] * d + force[1]
        i, p = self._sample(probs, rng, fidx)
        self._collapse([la, lb], kets[i], p, remove=True)
        return (i // d, i % d), p

    def apply_instrument(
        self,
        labels,
        kraus_ops,
        rng: np.random.Generator,
        out: list[tuple[str, int]] | None = None,
        force: int | None = None,
    ) -> tuple[int, float]:
        """Apply a Kraus instrument; sample a branch with Born probabilities.

        All branches must share one shape.  For shape-changing branches,
        ``out`` names the replacement registers.  Returns (branch index, prob).
        """
        labels = [labels] if isinstance(labels, str) else list(labels)
        ops = [linalg.as_matrix(k) for k in kraus_ops]
        if not linalg.kraus_complete(ops):
            raise IncompleteInstrumentError("sum K^dag K != I")
        sel = self._axes(labels)
        dims = self.dims()
        rest = [i for i in range(len(dims)) if i not in sel]
        sel_dim = int(np.prod([dims[i] for i in sel], dtype=np.int64))
        rest_dim = int(np.prod([dims[i] for i in rest], dtype=np.int64)) if rest else 1

        if self._vec is not None:
            psi = self._vec.reshape(dims)
            psi = np.transpose(psi, sel + rest).reshape(sel_dim, rest_dim)
            branches = [k @ psi for k in ops]
            probs = np.array([float(np.linalg.norm(b) ** 2) for b in branches])
            i, p = self._sample(probs, rng, force)
            chosen = branches[i] / math.sqrt(p)
            out_dim = ops[i].shape[0]
            square = ops[i].shape == (sel_dim, sel_dim)
            if square and out is None:
                new_dims = [dims[j] for j in sel] + [dims[j] for j in rest]
                inv = np.argsort(sel + rest)
                self._vec = np.transpose(chosen.reshape(new_dims), inv).reshape(-1)
            else:
                if out is None:
                    raise ValueError("shape-changing instrument needs output registers")
                out_regs = [Register(name, dim) for name, dim in out]
                out_dims = [r.dim for r in out_regs]
                if int(np.prod(out_dims, dtype=np.int64)) != out_dim:
                    raise DimensionMismatchError("output dims do not match branch rows")
                arr = chosen.reshape(out_dims + [dims[j] for j in rest])
                k = len(out_dims)
                perm = list(range(k, k + len(rest))) + list(range(k))
                self._vec = np.transpose(arr, perm).reshape(-1)
                keep = [r for j, r in enumerate(self.registers) if j not in sel]
                self.registers = keep + out_regs
            return i, float(p)

        # density path: evaluate each branch as a selective operation
        rho = self._rho.reshape(dims + dims)
        order = sel + rest
        n = len(dims)
        rho = np.transpose(rho, order + [n + i for i in order]).reshape(
            sel_dim * rest_dim, sel_dim * rest_dim
        )
        bigs = [np.kron(k, np.eye(rest_dim, dtype=complex)) for k in ops]
        branch_rhos = [b @ rho @ dagger(b) for b in bigs]
        probs = np.array([float(np.real(np.trace(r))) for r in branch_rhos])
        i, p = self._sample(probs, rng, force)
        chosen = branch_rhos[i] / p
        out_dim = ops[i].shape[0]
        square = ops[i].shape == (sel_dim, sel_dim)
        if square and out is None:
            new_dims = [dims[j] for j in order]
            arr = chosen.reshape(new_dims + new_dims)
            inv = list(np.argsort(order))
            arr = np.transpose(arr, inv + [len(order) + j for j in inv])
            self._rho = arr.reshape(self.dim, self.dim)
        else:
            if out is None:
                raise ValueError("shape-changing instrument needs output registers")
            out_regs = [Register(name, dim) for name, dim in out]
            out_dims = [r.dim for r in out_regs]
            full = out_dims + [dims[j] for j in rest]
            arr = chosen.reshape(full + full)
            k = len(out_dims)
            perm = list(range(k, k + len(rest))) + list(range(k))
            arr = np.transpose(arr, perm + [len(full) + j for j in perm])
            newd = int(np.prod(full, dtype=np.int64))
            self._rho = arr.reshape(newd, newd)
            keep = [r for j, r in enumerate(self.registers) if j not in sel]
            self.registers = keep + out_regs
        return i, float(p)

    # -- reduction -----------------------------------------------------------

    def partial_trace(self, keep) -> np.ndarray:
        """Reduced density operator on the kept registers, in their current order."""
        keep = [keep] if isinstance(keep, str) else list(keep)
        if not keep:
            raise EmptyKeepSetError("keep set must be nonempty")
        keep_idx = [self.index_of(lbl) for lbl in keep]
        # order of the result follows the current register order, not the call order
        keep_idx = sorted(set(keep_idx))
        dims = self.dims()
        n = len(dims)
        other = [i for i in range(n) if i not in keep_idx]
        keep_dim = int(np.prod([dims[i] for i in keep_idx], dtype=np.int64))
        other_dim = int(np.prod([dims[i] for i in other], dtype=np.int64)) if other else 1
        if self._vec is not None:
            psi = self._vec.reshape(dims)
            psi = np.transpose(psi, keep_idx + other).reshape(keep_dim, other_dim)
            return psi @ psi.conj().T
        rho = self._rho.reshape(dims + dims)
        order = keep_idx + other
        rho = np.transpose(rho, order + [n + i for i in order]).reshape(
            keep_dim * other_dim, keep_dim * other_dim
        )
        rho = rho.reshape(keep_dim, other_dim, keep_dim, other_dim)
        return np.trace(rho, axis1=1, axis2=3)

    def drop(self, labels) -> None:
        """Trace out and remove the named registers."""
        labels = [labels] if isinstance(labels, str) else list(labels)
        keep = [r.name for r in self.registers if r.name not in labels]
        for lbl in labels:
            self.index_of(lbl)  # raise for unknown labels
        if not keep:
            self._vec = np.ones(1, dtype=complex)
            self._rho = None
            self.registers = []
            return
        reduced = self.partial_trace(keep)
        kept_regs = [r for r in self.registers if r.name in keep]
        # purity decides whether the fast path survives the drop
        pur = float(np.real(np.trace(reduced @ reduced)))
        self.registers = kept_regs
        if pur > 1.0 - 1e-12:
            evals, evecs = np.linalg.eigh(reduced)
            self._vec = evecs[:, -1].astype(complex)
            self._rho = None
        else:
            self._vec = None
            self._rho = reduced

    # -- simulation-only exact merge ------------------------------------------

    def ideal_merge(
        self,
        label_coarse: str,
        label_fine: str,
        out_label: str,
        expected: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> None:
        """Replace a product (block vector) x (qubit) pair by the exact merge.

        The pair must hold a pure product state psi_c (x) psi_f within
        MERGE_TOL.  The merged register then holds

            psi_f[0] |0>  +  psi_f[1] * shift(psi_c)   in  H_{m+1},

        exactly the one-angle extension of a composed rotation applied to
        |0>.  This uses full knowledge of the simulator state; no protocol
        party could implement it physically.

        The merge result depends on the chosen factor representatives (the
        pair state fixes psi_c (x) psi_f only up to opposite phases on the
        factors).  ``expected``, when given, supplies the intended
        (coarse, fine) vectors and the extracted factors are phase-aligned
        to them; otherwise each factor is pinned canonically (fine: sine
        component real nonnegative; coarse: leading entry real nonnegative),
        which matches the intended representatives whenever all rotation
        angles lie in [0, pi/2].
        """
        dc = self.dim_of(label_coarse)
        df = self.dim_of(label_fine)
        if df != 2:
            raise NotMergeableStateError(f"fine register must be a qubit, got dim {df}")
        pair = self.partial_trace([label_coarse, label_fine])
        # a pure reduced pair state cannot be correlated with anything else
        pur = float(np.real(np.trace(pair @ pair)))
        if pur < 1.0 - MERGE_TOL:
            raise NotMergeableStateError(f"pair state purity {pur} below threshold")
        _, evecs = np.linalg.eigh(pair)
        psi_pair = evecs[:, -1].astype(complex)
        # partial_trace follows register-table order, not argument order
        if self.index_of(label_coarse) > self.index_of(label_fine):
            psi_pair = psi_pair.reshape(df, dc).T.reshape(-1)
        mat = psi_pair.reshape(dc, df)
        u, s, vh = np.linalg.svd(mat)
        if s.size > 1 and s[1] > MERGE_TOL:
            raise NotMergeableStateError("pair state is entangled, not a product")
        psi_c = u[:, 0].astype(complex)
        psi_f = (vh[0, :] * s[0]).astype(complex)

        def _align(vec: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, complex]:
            z = np.vdot(target, vec)
            if abs(z) < 1e-6:
                raise NotMergeableStateError("extracted factor does not match the expected state")
            ph = z / abs(z)
            return vec / ph, ph

        if expected is not None:
            exp_c = np.asarray(expected[0], dtype=complex)
            exp_f = np.asarray(expected[1], dtype=complex)
            psi_c, _ = _align(psi_c, exp_c)
            psi_f, _ = _align(psi_f, exp_f)
        else:
            for vec, order in ((psi_f, (1, 0)), (psi_c, None)):
                idx = None
                if order is not None:
                    for cand in order:
                        if abs(vec[cand]) > 1e-9:
                            idx = cand
                            break
                else:
                    nz = np.nonzero(np.abs(vec) > 1e-9)[0]
                    idx = int(nz[0]) if nz.size else 0
                ph = vec[idx] / abs(vec[idx])
                vec /= ph

        merged = np.zeros(dc + 1, dtype=complex)
        merged[0] = psi_f[0]
        merged[1:] = psi_f[1] * psi_c
        merged /= np.linalg.norm(merged)

        rest = [r.name for r in self.registers if r.name not in (label_coarse, label_fine)]
        if rest:
            if self._vec is not None:
                sel = self._axes([label_coarse, label_fine])
                dims = self.dims()
                others = [i for i in range(len(dims)) if i not in sel]
                arr = np.transpose(self._vec.reshape(dims), sel + others).reshape(dc * df, -1)
                rest_vec = psi_pair.conj() @ arr
                nrm = np.linalg.norm(rest_vec)
                if abs(nrm - 1.0) > 1e-6:
                    raise NotMergeableStateError("pair not in product with the rest")
                self._vec = np.kron(rest_vec / nrm, merged)
                self.registers = [self.registers[i] for i in others] + [Register(out_label, dc + 1)]
            else:
                rest_rho = self.partial_trace(rest)
                kept = [r for r in self.registers if r.name in rest]
                self._rho = np.kron(rest_rho, np.outer(merged, merged.conj()))
                self.registers = kept + [Register(out_label, dc + 1)]
        else:
            self._vec = merged
            self._rho = None
            self.registers = [Register(out_label, dc + 1)]


# ---------------------------------------------------------------------------
# metrics

def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh((m + dagger(m)) / 2.0)
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ dagger(evecs)


def _as_density(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 1:
        return np.outer(x, x.conj())
    return x


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (squared convention), accepting vectors or densities."""
    r, s = _as_density(rho), _as_density(sigma)
    if r.shape != s.shape:
        raise DimensionMismatchError(f"shapes {r.shape} vs {s.shape}")
    sr = _psd_sqrt(r)
    evals = np.linalg.eigvalsh(sr @ s @ sr)
    evals = np.clip(evals, 0.0, None)
    return float(min(1.0, np.sqrt(evals).sum() ** 2))


def trace_distance(rho, sigma) -> float:
    """(1/2) ||rho - sigma||_1."""
    r, s = _as_density(rho), _as_density(sigma)
    if r.shape != s.shape:
        raise DimensionMismatchError(f"shapes {r.shape} vs {s.shape}")
    evals = np.linalg.eigvalsh(r - s)
    return float(0.5 * np.abs(evals).sum())
