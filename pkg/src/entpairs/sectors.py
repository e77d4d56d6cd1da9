"""Parity-sector Krylov solvers for Liouvillians too large for direct LU.

Every model in this package conserves the parity of the total number of
excitations (cavity photons plus qubits in ``|+>``) in its Hamiltonian, and
each jump operator either flips or keeps that parity.  A density matrix then
splits into blocks ``X_ab`` between parity classes ``a, b`` and the generator
maps the ``a == b`` blocks (the sector holding every steady state) and the
``a != b`` blocks among themselves.

Inside a sector the non-Hermitian part ``X -> -i H_eff X + i X H_eff^+`` is a
Sylvester operator, inverted exactly through the eigendecomposition of the
diagonal blocks of ``H_eff``.  It serves as right preconditioner for GMRES.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .tensor import HilbertSpace

log = logging.getLogger(__name__)


class NoParitySymmetry(ValueError):
    pass


def basis_parity(space: HilbertSpace) -> np.ndarray:
    """Excitation parity of every product basis state."""
    p = np.zeros(space.dims, dtype=np.int64)
    for k, site in enumerate(space.sites):
        shape = [1] * len(space.dims)
        shape[k] = site.local_dim
        if site.kind == "qubit":
            local = np.array([1, 0])  # |+> is the excited level
        else:
            local = np.arange(site.local_dim) % 2
        p = p + local.reshape(shape)
    return (p % 2).ravel()


def _flip_of(A: sp.spmatrix, parity: np.ndarray) -> int:
    coo = A.tocoo()
    if coo.nnz == 0:
        return 0
    flips = parity[coo.row] ^ parity[coo.col]
    if np.any(flips != flips[0]):
        raise NoParitySymmetry("operator mixes parity-changing and parity-preserving terms")
    return int(flips[0])


@dataclass
class _Block:
    a: int
    b: int
    shape: tuple[int, int]
    offset: int

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]


class ParitySectors:
    def __init__(self, L):
        parity = basis_parity(L.space)
        if _flip_of(L.H_eff, parity) != 0:
            raise NoParitySymmetry("H_eff does not conserve parity")
        self.L = L
        self.idx = [np.flatnonzero(parity == c) for c in (0, 1)]
        H = L.H_eff.tocsr()
        self.H = [H[ix][:, ix].tocsr() for ix in self.idx]
        self.jumps = []
        for A, rate in L.jumps:
            A = A.tocsr()
            f = _flip_of(A, parity)
            # sub[a] maps parity class a to class a ^ f
            sub = {a: A[self.idx[a ^ f]][:, self.idx[a]].tocsr() for a in (0, 1)}
            self.jumps.append((rate, f, sub))
        self._eig = None

    def blocks(self, sector: int) -> list[_Block]:
        out, off = [], 0
        for a in (0, 1):
            b = a ^ sector
            shape = (len(self.idx[a]), len(self.idx[b]))
            if shape[0] and shape[1]:
                out.append(_Block(a, b, shape, off))
                off += shape[0] * shape[1]
        return out

    def size(self, sector: int) -> int:
        return sum(b.size for b in self.blocks(sector))

    def vec_indices(self, sector: int) -> np.ndarray:
        """Positions of the sector's entries inside the full column-stacked vector."""
        d = self.L.d
        parts = [(self.idx[bl.a][:, None] + d * self.idx[bl.b][None, :]).ravel(order="F")
                 for bl in self.blocks(sector)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def matrix(self, sector: int) -> sp.csr_matrix:
        sel = self.vec_indices(sector)
        return self.L.matrix[sel][:, sel].tocsr()

    def _split(self, sector, x):
        return {(bl.a, bl.b): x[bl.offset:bl.offset + bl.size].reshape(bl.shape, order="F")
                for bl in self.blocks(sector)}

    def _join(self, sector, parts):
        return np.concatenate([parts[(bl.a, bl.b)].reshape(-1, order="F")
                               for bl in self.blocks(sector)])

    def apply(self, sector: int, x: np.ndarray) -> np.ndarray:
        X = self._split(sector, x)
        out = {}
        for (a, b), Xab in X.items():
            # -i H_a X + i X H_b^+ ; X H_b^+ = (H_b X^+)^+
            out[(a, b)] = -1j * (self.H[a] @ Xab) + 1j * (self.H[b] @ Xab.conj().T).conj().T
        for rate, f, sub in self.jumps:
            for (a, b), Xab in X.items():
                tgt = (a ^ f, b ^ f)
                if tgt in out:
                    Aa, Ab = sub[a], sub[b]
                    out[tgt] = out[tgt] + rate * (Aa @ (Ab @ Xab.conj().T).conj().T)
        return self._join(sector, out)

    def _eigs(self):
        if self._eig is None:
            self._eig = []
            for Hc in self.H:
                if Hc.shape[0] == 0:
                    self._eig.append(None)
                    continue
                lam, V = np.linalg.eig(Hc.toarray())
                self._eig.append((lam, V, np.linalg.inv(V)))
        return self._eig

    def sylvester_inverse(self, sector: int, sigma: complex):
        """Exact inverse of ``X -> -i H_a X + i X H_b^+ - sigma X`` blockwise."""
        eig = self._eigs()
        blocks = self.blocks(sector)
        denom = {}
        for bl in blocks:
            la, lb = eig[bl.a][0], eig[bl.b][0]
            denom[(bl.a, bl.b)] = -1j * la[:, None] + 1j * lb.conj()[None, :] - sigma

        def solve(y):
            Y = self._split(sector, y)
            out = {}
            for (a, b), Yab in Y.items():
                _, Va, Via = eig[a]
                _, Vb, Vib = eig[b]
                Z = (Via @ Yab @ Vib.conj().T) / denom[(a, b)]
                out[(a, b)] = Va @ Z @ Vb.conj().T
            return self._join(sector, out)

        return solve

    def trace_vector(self) -> np.ndarray:
        parts = {}
        for bl in self.blocks(0):
            parts[(bl.a, bl.b)] = np.eye(bl.shape[0], dtype=complex)
        return self._join(0, parts)

    def to_full(self, sector: int, x: np.ndarray) -> np.ndarray:
        d = self.L.d
        rho = np.zeros((d, d), dtype=complex)
        for (a, b), Xab in self._split(sector, x).items():
            rho[np.ix_(self.idx[a], self.idx[b])] = Xab
        return rho


def _gmres(op, rhs, prec, rtol, restart, maxiter):
    n = rhs.size
    A = spla.LinearOperator((n, n), matvec=op, dtype=complex)
    M = spla.LinearOperator((n, n), matvec=prec, dtype=complex)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(A, rhs, M=M, rtol=rtol, atol=0.0, restart=restart,
                         maxiter=maxiter, callback=cb, callback_type="pr_norm")
    return x, info, count[0]


def steady_state_krylov(L, shift: float = 0.02, rtol: float = 1e-13,
                        restart: int = 300, maxiter: int = 20) -> np.ndarray:
    """Steady state by preconditioned GMRES in the parity-diagonal sector.

    Solves ``L(X) + W tr(X) = W`` with ``W`` the maximally mixed state; the
    trace of the solution is then 1 and ``L(X) = 0`` whenever the null space
    is one-dimensional.
    """
    S = ParitySectors(L)
    tr = S.trace_vector()
    w = tr / tr.sum()
    prec = S.sylvester_inverse(0, shift * L.kappa)

    def op(x):
        return S.apply(0, x) + w * (tr @ x)

    x, info, its = _gmres(op, w, prec, rtol, restart, maxiter)
    log.debug("steady-state GMRES: info=%s iterations=%s", info, its)
    return S.to_full(0, x)


def sector_eigenvalues(L) -> np.ndarray:
    """All eigenvalues, diagonalizing the two parity sectors separately."""
    S = ParitySectors(L)
    return np.concatenate([np.linalg.eigvals(S.matrix(sector).toarray())
                           for sector in (0, 1) if S.size(sector)])


def shift_invert_eigenvalues(L, k: int, sigma: float, inner_rtol: float = 1e-10,
                             restart: int = 200, maxiter: int = 20) -> np.ndarray:
    """Eigenvalues closest to ``sigma`` in both parity sectors.

    ARPACK runs on ``(L - sigma)^-1`` with the inverse applied by
    preconditioned GMRES.
    """
    S = ParitySectors(L)
    found = []
    for sector in (0, 1):
        n = S.size(sector)
        if n == 0:
            continue
        prec = S.sylvester_inverse(sector, sigma)

        def op(x, sector=sector):
            return S.apply(sector, x) - sigma * x

        def inv(b, op=op, prec=prec):
            x, info, _ = _gmres(op, b, prec, inner_rtol, restart, maxiter)
            if info != 0:
                log.warning("inner GMRES did not converge (info=%s)", info)
            return x

        OPinv = spla.LinearOperator((n, n), matvec=inv, dtype=complex)
        kk = min(k, n - 2)
        mu = spla.eigs(spla.LinearOperator((n, n), matvec=op, dtype=complex), k=kk,
                       sigma=sigma, OPinv=OPinv, which="LM", return_eigenvectors=False,
                       tol=1e-9, maxiter=5000)
        found.append(mu)
    return np.concatenate(found)
