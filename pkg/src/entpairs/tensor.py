"""Tensor-product Hilbert spaces and sparse operator algebra.

Conventions used throughout the package:

* ``hbar = 1`` and every rate or frequency is measured in units of the
  central decay rate kappa.
* A qubit basis is ordered ``(|+>, |->)`` with ``sigma_z |+-> = +-|+->``.
* A truncated boson basis is ordered ``|0>, |1>, ..., |n_max>``.
* Sites are ordered by their index ``j = -N..N``; at a composite site the
  cavity comes before its qubit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

DROP_TOL = 1e-15


class SpaceError(ValueError):
    """Raised on unknown site labels, dimension or space mismatches."""


@dataclass(frozen=True)
class SiteDescriptor:
    """One tensor factor.

    ``label`` is ``("c", j)`` for a cavity (or the companion qubit that
    replaces it) and ``("q", j)`` for a qubit.
    """

    kind: str
    index: int
    local_dim: int
    companion: bool = False

    def __post_init__(self):
        if self.kind not in ("qubit", "boson"):
            raise SpaceError(f"unknown site kind {self.kind!r}")
        if self.kind == "qubit" and self.local_dim != 2:
            raise SpaceError("qubit sites have local_dim 2")
        if self.kind == "boson" and self.local_dim < 2:
            raise SpaceError("boson sites need local_dim >= 2")

    @property
    def label(self) -> tuple[str, int]:
        if self.kind == "boson" or self.companion:
            return ("c", self.index)
        return ("q", self.index)


def _site_sort_key(site: SiteDescriptor):
    # cavity (or companion) precedes the qubit at the same index
    return (site.index, 0 if site.label[0] == "c" else 1)


@dataclass(frozen=True)
class HilbertSpace:
    sites: tuple[SiteDescriptor, ...]

    def __post_init__(self):
        sites = tuple(sorted(self.sites, key=_site_sort_key))
        object.__setattr__(self, "sites", sites)
        labels = [s.label for s in sites]
        if len(set(labels)) != len(labels):
            raise SpaceError(f"duplicate site labels in {labels}")
        if not sites:
            raise SpaceError("empty Hilbert space")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.local_dim for s in self.sites)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def labels(self) -> list[tuple[str, int]]:
        return [s.label for s in self.sites]

    def position(self, label) -> int:
        label = tuple(label)
        for k, s in enumerate(self.sites):
            if s.label == label:
                return k
        raise SpaceError(f"unknown site label {label!r}")

    def site(self, label) -> SiteDescriptor:
        return self.sites[self.position(label)]

    def qubit_labels(self) -> list[tuple[str, int]]:
        """Labels of the array qubits (companion qubits excluded)."""
        return [s.label for s in self.sites if s.label[0] == "q"]

    def basis_index(self, local_indices: Sequence[int]) -> int:
        """Flat index of a product basis state given per-site indices."""
        return int(np.ravel_multi_index(tuple(local_indices), self.dims))


def _clean(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=complex)
    if m.nnz:
        m.data[np.abs(m.data) < DROP_TOL] = 0.0
        m.eliminate_zeros()
    return m


@dataclass(frozen=True, eq=False)
class Operator:
    """Sparse complex matrix tied to a :class:`HilbertSpace`."""

    space: HilbertSpace
    matrix: sp.csr_matrix = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        m = _clean(self.matrix)
        object.__setattr__(self, "matrix", m)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise SpaceError(f"operator shape {m.shape} does not match dim {d}")
        if self.hermitian:
            err = hermiticity_error(m)
            if err >= 1e-12:
                raise ValueError(f"operator flagged Hermitian but |A - A^+|_max = {err:.3e}")

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise SpaceError("operators live on different spaces")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, c) -> "Operator":
        return Operator(self.space, self.matrix * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T.tocsr())

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm_max(self) -> float:
        return float(np.abs(self.matrix.data).max()) if self.matrix.nnz else 0.0


def hermiticity_error(m) -> float:
    diff = m - m.conj().T
    if sp.issparse(diff):
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0
    return float(np.abs(diff).max()) if diff.size else 0.0


def zero_operator(space: HilbertSpace) -> Operator:
    d = space.total_dim
    return Operator(space, sp.csr_matrix((d, d), dtype=complex))


def identity_operator(space: HilbertSpace) -> Operator:
    return Operator(space, sp.identity(space.total_dim, dtype=complex, format="csr"))


# -- local operators ---------------------------------------------------------

def boson_annihilate(n_max: int) -> np.ndarray:
    """Lowering operator on ``|0>..|n_max>`` (sqrt(n) on the superdiagonal)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# (sigma_x - i sigma_y)/2 maps |+> (index 0) to |-> (index 1)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def qubit_ops() -> dict[str, np.ndarray]:
    return {
        "x": SIGMA_X.copy(),
        "y": SIGMA_Y.copy(),
        "z": SIGMA_Z.copy(),
        "minus": SIGMA_MINUS.copy(),
    }


def local_embed(space: HilbertSpace, site_label, local_op) -> Operator:
    """Embed ``local_op`` at ``site_label``: ``I x ... x local_op x ... x I``."""
    k = space.position(site_label)
    local = np.asarray(local_op.toarray() if sp.issparse(local_op) else local_op, dtype=complex)
    dk = space.sites[k].local_dim
    if local.shape != (dk, dk):
        raise SpaceError(
            f"local operator shape {local.shape} does not match site {tuple(site_label)} dim {dk}"
        )
    left = int(np.prod(space.dims[:k]))
    right = int(np.prod(space.dims[k + 1:]))
    m = sp.kron(
        sp.kron(sp.identity(left, dtype=complex, format="csr"), sp.csr_matrix(local)),
        sp.identity(right, dtype=complex, format="csr"),
        format="csr",
    )
    return Operator(space, m)


def product_operator(space: HilbertSpace, factors: dict) -> Operator:
    """Product of local operators on distinct sites."""
    ops = [local_embed(space, lab, op) for lab, op in factors.items()]
    return reduce(lambda a, b: a @ b, ops)


# -- states ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PureState:
    space: HilbertSpace
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex).ravel()
        object.__setattr__(self, "vector", v)
        if v.shape != (self.space.total_dim,):
            raise SpaceError("state vector length does not match space")

    def validate(self, tol: float = 1e-12) -> None:
        n = np.linalg.norm(self.vector)
        if abs(n - 1.0) >= tol:
            raise ValueError(f"state norm deviates from 1 by {abs(n - 1):.3e}")

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.vector, self.vector.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        d = self.space.total_dim
        if m.shape != (d, d):
            raise SpaceError("density matrix shape does not match space")

    def validate(self, trace_tol: float = 1e-10, psd_tol: float = 1e-9,
                 herm_tol: float = 1e-10) -> None:
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) >= trace_tol:
            raise ValueError(f"trace deviates from 1 by {abs(tr - 1):.3e}")
        if hermiticity_error(self.matrix) >= herm_tol:
            raise ValueError("density matrix is not Hermitian")
        lo = min_eigenvalue(self.matrix)
        if lo <= -psd_tol:
            raise ValueError(f"density matrix has eigenvalue {lo:.3e}")

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))


def min_eigenvalue(m: np.ndarray) -> float:
    h = 0.5 * (m + m.conj().T)
    return float(np.linalg.eigvalsh(h)[0])


def basis_state(space: HilbertSpace, local_indices: Sequence[int]) -> PureState:
    v = np.zeros(space.total_dim, dtype=complex)
    v[space.basis_index(local_indices)] = 1.0
    return PureState(space, v)


def partial_trace(rho: DensityMatrix, keep: Iterable) -> DensityMatrix:
    """Reduced state on ``keep``; the kept sites stay in canonical order."""
    keep = {tuple(k) for k in keep}
    if not keep:
        raise SpaceError("keep set is empty")
    space = rho.space
    pos = sorted(space.position(lab) for lab in keep)
    if len(pos) == len(space.sites):
        return rho
    dims = space.dims
    n = len(dims)
    t = rho.matrix.reshape(dims + dims)
    # einsum subscripts: kept ket/bra axes free, traced axes share a letter
    letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    ket = [next(letters) for _ in range(n)]
    bra = [ket[i] if i not in pos else next(letters) for i in range(n)]
    out = [ket[i] for i in pos] + [bra[i] for i in pos]
    red = np.einsum("".join(ket) + "".join(bra) + "->" + "".join(out), t)
    sub = HilbertSpace(tuple(space.sites[i] for i in pos))
    d = sub.total_dim
    return DensityMatrix(sub, red.reshape(d, d))


def expectation(op: Operator, state) -> complex:
    if op.space != state.space:
        raise SpaceError("operator and state live on different spaces")
    if isinstance(state, PureState):
        return complex(np.vdot(state.vector, op.matrix @ state.vector))
    # Tr(A rho) = sum_ij A_ij rho_ji
    a = op.matrix.tocoo()
    return complex(np.sum(a.data * state.matrix[a.col, a.row]))


def permutation_matrix(space: HilbertSpace, mapping: dict) -> sp.csr_matrix:
    """Basis permutation sending the factor at label ``a`` to label ``mapping[a]``.

    Only sites with equal local dimension may be exchanged.
    """
    dims = space.dims
    n = len(dims)
    perm = list(range(n))
    for src, dst in mapping.items():
        i, k = space.position(src), space.position(dst)
        if dims[i] != dims[k]:
            raise SpaceError("cannot exchange sites of different dimension")
        perm[k] = i
    idx = np.arange(space.total_dim).reshape(dims)
    # new tensor axis k carries old axis perm[k]
    new_idx = np.transpose(idx, perm).ravel()
    d = space.total_dim
    return sp.csr_matrix((np.ones(d), (np.arange(d), new_idx)), shape=(d, d), dtype=complex)
