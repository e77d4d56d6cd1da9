"""Liouvillian superoperator, steady states and relaxation spectrum.

Vectorization is column stacking everywhere: ``vec(A X B) = (B^T kron A) vec(X)``,
so ``vec(rho)[i + d*k] = rho[i, k]``.  With ``H_eff = H - i/2 sum_k G_k A_k^+ A_k``
the generator reads::

    L = -i (I kron H_eff) + i (conj(H_eff) kron I) + sum_k G_k conj(A_k) kron A_k
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .models import ModelSpec, build_hamiltonian, build_jump_operators, build_space
from .sectors import (NoParitySymmetry, sector_eigenvalues, shift_invert_eigenvalues,
                      steady_state_krylov)
from .tensor import DensityMatrix, HilbertSpace, PureState

log = logging.getLogger(__name__)

DEFAULT_DIM_CAP = 2**32
DENSE_MAX_DIM = 48
DENSE_EIGVEC_DIM = 16
TOL_NULL = 1e-8
GAP_RATIO_MAX = 1e-3


class SolverError(RuntimeError):
    """Numerical failure, carries the residual when one is available."""

    def __init__(self, msg: str, residual: Optional[float] = None):
        super().__init__(msg if residual is None else f"{msg} (residual {residual:.3e})")
        self.residual = residual


class DimensionError(ValueError):
    pass


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")


@dataclass(frozen=True, eq=False)
class Superoperator:
    space: HilbertSpace
    H: sp.csr_matrix = field(repr=False)
    jumps: tuple = field(repr=False)  # ((A, rate), ...)
    kappa: float = 1.0

    @property
    def d(self) -> int:
        return self.space.total_dim

    @property
    def dim(self) -> int:
        return self.d * self.d

    @cached_property
    def H_eff(self) -> sp.csr_matrix:
        h = self.H.astype(complex)
        for A, rate in self.jumps:
            h = h - 0.5j * rate * (A.conj().T @ A)
        return h.tocsr()

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        d = self.d
        eye = sp.identity(d, dtype=complex, format="csr")
        L = -1j * sp.kron(eye, self.H_eff) + 1j * sp.kron(self.H_eff.conj(), eye)
        for A, rate in self.jumps:
            L = L + rate * sp.kron(A.conj(), A)
        L = L.tocsr()
        L.eliminate_zeros()
        return L

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Matrix-free ``L(rho)`` on a ``d x d`` array."""
        Hr = self.H_eff @ rho
        out = -1j * Hr
        # rho H_eff^+ = (H_eff rho^+)^+
        out += 1j * (self.H_eff @ rho.conj().T).conj().T
        for A, rate in self.jumps:
            # rho A^+ = (A rho^+)^+
            out += rate * (A @ (A @ rho.conj().T).conj().T)
        return out

    def apply_vec(self, v: np.ndarray) -> np.ndarray:
        return vec(self.apply(unvec(v, self.d)))

    def trace_functional(self) -> np.ndarray:
        return vec(np.eye(self.d, dtype=complex))


def build_liouvillian(spec: ModelSpec, dim_cap: int = DEFAULT_DIM_CAP) -> Superoperator:
    space = build_space(spec)
    d = space.total_dim
    if d * d > dim_cap:
        raise DimensionError(f"Liouvillian dimension {d * d} exceeds cap {dim_cap}")
    H = build_hamiltonian(spec).matrix
    jumps = tuple((j.op.matrix, j.rate) for j in build_jump_operators(spec))
    return Superoperator(space, H, jumps, spec.kappa)


def left_null_error(L: Superoperator) -> float:
    """``|vec(I)^T L|_max``; zero for a trace-preserving generator."""
    row = L.trace_functional() @ L.matrix
    return float(np.abs(row).max())


def _density_from_vector(space: HilbertSpace, v: np.ndarray) -> DensityMatrix:
    d = space.total_dim
    rho = unvec(v, d)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-14:
        raise SolverError("null vector has vanishing trace")
    return DensityMatrix(space, rho / tr)


def steady_state_nullspace(L: Superoperator, residual_tol: float = 1e-10) -> DensityMatrix:
    """Steady state from the null space of ``L``.

    Three tiers by Hilbert-space dimension ``d``:

    * ``d <= 16``: eigenvector of the dense generator closest to zero;
    * ``d <= 48``: first row of ``L`` replaced by the trace functional and
      the bordered system solved by sparse LU (inverse iteration at 0);
    * larger: preconditioned GMRES in the parity-diagonal sector
      (:func:`entpairs.sectors.steady_state_krylov`).

    The result is Hermitized and trace-normalized; its residual
    ``|L(rho)|`` must stay below ``residual_tol``.
    """
    d = L.d
    if d <= DENSE_EIGVEC_DIM:
        w, V = scipy.linalg.eig(L.matrix.toarray())
        k = int(np.argmin(np.abs(w)))
        rho = _density_from_vector(L.space, V[:, k])
    elif d <= DENSE_MAX_DIM:
        A = L.matrix.tolil()
        A[0, :] = sp.csr_matrix(L.trace_functional())
        rhs = np.zeros(L.dim, dtype=complex)
        rhs[0] = 1.0
        try:
            lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        rho = _density_from_vector(L.space, lu.solve(rhs))
    else:
        rho = _density_from_vector(L.space, vec(steady_state_krylov(L)))
    res = float(np.linalg.norm(L.apply(rho.matrix)))
    if not np.isfinite(res) or res > residual_tol:
        raise SolverError("steady state residual above tolerance", res)
    return rho


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray  # sorted by |Re| ascending
    null_dim: int
    gap: float
    gap_ratio: float
    tol_null: float
    method: str = "dense"

    @property
    def status(self) -> str:
        if self.null_dim == 1 and self.gap_ratio < GAP_RATIO_MAX:
            return "unique"
        if self.null_dim >= 2 and self.gap_ratio < GAP_RATIO_MAX:
            return "degenerate"
        return "indeterminate"

    def to_row(self, n_eig: int = 2) -> dict:
        row = {"gap": self.gap, "null_dim": self.null_dim}
        for i in range(n_eig):
            lam = self.eigenvalues[i] if i < len(self.eigenvalues) else complex("nan")
            row[f"re_lambda_{i}"] = float(np.real(lam))
            row[f"im_lambda_{i}"] = float(np.imag(lam))
        return row


def _sort_by_re(w: np.ndarray) -> np.ndarray:
    return w[np.lexsort((np.abs(w.imag), np.abs(w.real)))]


def _summarize(w: np.ndarray, tol_null: float, method: str) -> SpectrumResult:
    w = _sort_by_re(np.asarray(w, dtype=complex))
    small = np.abs(w) < tol_null
    null_dim = int(small.sum())
    nonnull = w[~small]
    gap = float(abs(nonnull[0].real)) if len(nonnull) else float("nan")
    # uniqueness certificate: largest null modulus over smallest non-null modulus
    if null_dim and len(nonnull):
        ratio = float(np.abs(w[small]).max() / np.abs(nonnull).min())
    else:
        ratio = float("inf")
    return SpectrumResult(w, null_dim, gap, ratio, tol_null, method)


def leading_eigenvalues(L: Superoperator, k: int = 6, tol_null: Optional[float] = None,
                        sigma: Optional[complex] = None) -> SpectrumResult:
    """The ``k`` eigenvalues of smallest ``|Re|``.

    Dense diagonalization up to ``total_dim = 48`` (per parity sector when the
    model has the symmetry).  Beyond that, ARPACK in shift-invert mode around
    a small positive real shift, per parity sector, returns the eigenvalues
    closest to the origin.  The slowest modes are among them unless some
    mode has a tiny real part and a large imaginary part; pass a complex
    ``sigma`` near such a mode to resolve it.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    tol_null = TOL_NULL * L.kappa if tol_null is None else tol_null
    if L.d <= DENSE_MAX_DIM:
        try:
            w = sector_eigenvalues(L)
        except NoParitySymmetry:
            w = scipy.linalg.eigvals(L.matrix.toarray())
        res = _summarize(w, tol_null, "dense")
        res.eigenvalues = res.eigenvalues[:max(k, res.null_dim + 1)]
        return res
    sigma = 0.05 * L.kappa if sigma is None else sigma
    try:
        w = shift_invert_eigenvalues(L, k=max(k + 2, 8), sigma=sigma)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"shift-invert Arnoldi did not converge: {exc}") from exc
    res = _summarize(w, tol_null, "shift-invert")
    res.eigenvalues = res.eigenvalues[:max(k, res.null_dim + 1)]
    return res


def null_space_dimension(L: Superoperator, tol_null: Optional[float] = None) -> int:
    return leading_eigenvalues(L, k=6, tol_null=tol_null).null_dim


def stationarity_residual(L: Superoperator, state) -> float:
    """``|L(rho)|_2`` for a pure state or density matrix (Frobenius norm)."""
    if isinstance(state, PureState):
        rho = np.outer(state.vector, state.vector.conj())
    elif isinstance(state, DensityMatrix):
        rho = state.matrix
    else:
        rho = np.asarray(state)
    if rho.shape != (L.d, L.d):
        raise DimensionError("state does not match the Liouvillian space")
    return float(np.linalg.norm(L.apply(rho)))


def hermiticity_preservation_error(L: Superoperator, rho: np.ndarray) -> float:
    out = L.apply(rho)
    return float(np.abs(out - out.conj().T).max())


@dataclass
class DetuningScan:
    grid: np.ndarray
    spectra: list
    best_index: int

    @property
    def best(self) -> float:
        return float(self.grid[self.best_index])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([s.gap for s in self.spectra])


def with_base_detuning(spec: ModelSpec, delta: float, step: float = 0.05) -> ModelSpec:
    """Set ``Delta_j = delta + step*(j-1)`` on the topology's detuning array."""
    from dataclasses import replace

    values = tuple(delta + step * (j - 1) for j in range(1, spec.N + 1))
    if spec.topology in ("Ccq", "Scq"):
        return replace(spec, delta_c=values)
    return replace(spec, delta_q=values)


def optimize_detuning(spec: ModelSpec, grid: Sequence[float], step: float = 0.05,
                      k: int = 4, executor=None) -> DetuningScan:
    """Scan the base detuning and keep the value with the largest gap.

    Ties go to the earliest grid point.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("empty detuning grid")

    def one(delta):
        return leading_eigenvalues(build_liouvillian(with_base_detuning(spec, delta, step)), k=k)

    spectra = list(executor.map(one, grid)) if executor is not None else [one(x) for x in grid]
    gaps = np.array([s.gap for s in spectra])
    gaps = np.where(np.isfinite(gaps), gaps, -np.inf)
    best = int(np.argmax(gaps))  # argmax returns the first maximum
    return DetuningScan(grid, spectra, best)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def fidelity_with_pure(rho: DensityMatrix, psi: PureState) -> float:
    return float(np.real(np.vdot(psi.vector, rho.matrix @ psi.vector)))
