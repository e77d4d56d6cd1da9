"""Pairwise qubit entanglement: Wootters concurrence of reduced states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import SIGMA_Y, DensityMatrix, PureState, SpaceError, partial_trace

PSD_TOL = 1e-9

_YY = np.kron(SIGMA_Y, SIGMA_Y)


class NotPSDError(ValueError):
    pass


def _psd_factor(rho: np.ndarray) -> np.ndarray:
    """``X`` with ``rho = X X^+``; eigenvalues down to ``-PSD_TOL`` count as zero."""
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w[0] < -PSD_TOL:
        raise NotPSDError(f"input has eigenvalue {w[0]:.3e}")
    return V * np.sqrt(np.clip(w, 0.0, None))


def wootters_concurrence(rho2) -> float:
    """Concurrence ``max(0, l1 - l2 - l3 - l4)`` of a two-qubit state.

    The ``l_i`` (square roots of the eigenvalues of ``rho (Y x Y) rho* (Y x Y)``)
    are the singular values of ``X^T (Y x Y) X`` for any factor ``rho = X X^+``.
    Taking them as singular values avoids square roots of round-off sized
    eigenvalues, which would otherwise bias nearly pure inputs by ~1e-8.
    """
    rho = np.asarray(rho2.matrix if isinstance(rho2, DensityMatrix) else rho2, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("need a 4x4 two-qubit density matrix")
    X = _psd_factor(rho)
    lam = np.linalg.svd(X.T @ _YY @ X, compute_uv=False)
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


@dataclass(frozen=True)
class PairConcurrenceRecord:
    pair: tuple[int, int]
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("concurrence must lie in [0, 1]")


def reduced_pair_state(state, j: int, k: int) -> np.ndarray:
    """Two-qubit reduced density matrix of qubits ``j`` and ``k`` (canonical order)."""
    if isinstance(state, PureState):
        state = state.density()
    labels = [("q", j), ("q", k)]
    for lab in labels:
        if lab not in state.space.labels or state.space.site(lab).kind != "qubit":
            raise SpaceError(f"{lab} is not a qubit site")
    if j == k:
        raise SpaceError("pair needs two distinct qubits")
    return partial_trace(state, labels).matrix


def pair_concurrence(state, j: int, k: int) -> PairConcurrenceRecord:
    return PairConcurrenceRecord((j, k), wootters_concurrence(reduced_pair_state(state, j, k)))


def analytic_pair_concurrence(n_bar: float) -> float:
    """``2 sqrt(n(n+1)) / (2n+1)``: concurrence of each ``(j, -j)`` pair at gamma = 0."""
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    return 2.0 * math.sqrt(n_bar * (n_bar + 1.0)) / (2.0 * n_bar + 1.0)
