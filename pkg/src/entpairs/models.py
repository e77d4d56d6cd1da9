"""Hamiltonians, jump operators and analytic steady states of the four arrays.

Topologies
----------
``Ccq``  chain of cavities, every cavity but the central one carries a qubit
``Scq``  star of cavities around the central one, each outer cavity with a qubit
``Cq``   two qubit chains attached to a single central cavity
``Sq``   star of qubits around a single central cavity

Parameter arrays hold the values for ``j >= 1`` only; the builders apply the
antisymmetric sign of the detunings for ``-j`` themselves.  Array lengths:

=========  =======================================================
Ccq, Scq   ``delta_c``, ``g``, ``eta_c``: length N (entry ``j-1``)
Cq         ``delta_q``: length N, ``g``: length 1, ``eta_q``: length
           N-1 holding ``eta_{q,2} .. eta_{q,N}``
Sq         ``delta_q``, ``g``: length N
=========  =======================================================

The central cavity is damped by a squeezed reservoir, with jump operator
``beta_0 = sqrt(n+1) b_0 - sqrt(n) b_0^+``.  In the squeezed representation
the same physics is described with an ordinary decay ``b_0`` and Bogoliubov
transformed cavity-qubit couplings.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .tensor import (
    HilbertSpace,
    Operator,
    PureState,
    SiteDescriptor,
    boson_annihilate,
    local_embed,
    permutation_matrix,
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    zero_operator,
)

TOPOLOGIES = ("Ccq", "Scq", "Cq", "Sq")
REPRESENTATIONS = ("original", "squeezed")
SQUEEZE_DIM_CAP = 4096


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class DisorderSpec:
    r_max: float = 0.0
    targets: tuple[str, ...] = ("detunings",)
    seed: int = 0
    realizations: int = 200

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not 0.0 <= self.r_max < 1.0:
            raise SpecError("r_max must lie in [0, 1)")
        bad = set(self.targets) - {"detunings", "couplings"}
        if bad:
            raise SpecError(f"unknown disorder targets {sorted(bad)}")
        if self.realizations < 1:
            raise SpecError("realizations must be positive")


@dataclass(frozen=True)
class ModelSpec:
    """Full description of one model instance (all rates in units of kappa)."""

    topology: str
    N: int
    n_bar: float = 1.0
    kappa: float = 1.0
    gamma: float = 0.0
    delta_c: tuple[float, ...] = ()
    delta_q: tuple[float, ...] = ()
    g: tuple[float, ...] = ()
    eta_c: tuple[float, ...] = ()
    eta_q: tuple[float, ...] = ()
    # per cavity, ordered j = -N..N for Ccq/Scq, a single entry for Cq/Sq;
    # None selects the defaults (2 for the central cavity, 1 elsewhere)
    n_max: Optional[tuple[int, ...]] = None
    representation: str = "squeezed"
    disorder: Optional[DisorderSpec] = None
    # concrete multiplicative factors (1 + r) per signed index, keys
    # "delta", "g", "eta"; each tuple is ordered j = -N..-1, 1..N
    scales: Optional[dict] = field(default=None, compare=True)

    def __post_init__(self):
        for name in ("delta_c", "delta_q", "g", "eta_c", "eta_q"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if self.n_max is None:
            object.__setattr__(self, "n_max", default_n_max(self.topology, self.N))
        else:
            object.__setattr__(self, "n_max", tuple(int(x) for x in self.n_max))
        if isinstance(self.disorder, dict):
            object.__setattr__(self, "disorder", DisorderSpec(**self.disorder))
        if self.scales is not None:
            object.__setattr__(
                self, "scales", {k: tuple(float(x) for x in v) for k, v in self.scales.items()}
            )
        self.validate()

    def validate(self) -> None:
        t, N = self.topology, self.N
        if t not in TOPOLOGIES:
            raise SpecError(f"unknown topology {t!r}")
        if N < 1:
            raise SpecError("N must be positive")
        if self.representation not in REPRESENTATIONS:
            raise SpecError(f"unknown representation {self.representation!r}")
        if self.n_bar < 0 or self.kappa <= 0 or self.gamma < 0:
            raise SpecError("need n_bar >= 0, kappa > 0, gamma >= 0")
        want = expected_lengths(t, N)
        for name, n in want.items():
            if len(getattr(self, name)) != n:
                raise SpecError(f"{t} with N={N} needs len({name}) == {n}")
        if len(self.n_max) != n_cavities(t, N):
            raise SpecError(f"{t} needs {n_cavities(t, N)} n_max entries")
        if min(self.n_max) < 1:
            raise SpecError("n_max must be >= 1 for every cavity")
        if self.scales is not None:
            for k, v in self.scales.items():
                if k not in ("delta", "g", "eta") or len(v) != 2 * N:
                    raise SpecError(f"bad scale entry {k!r}")

    @property
    def qubit_only_requested(self) -> bool:
        return all(n == 1 for n in self.n_max)

    @property
    def qubit_only(self) -> bool:
        return self.representation == "squeezed" and self.qubit_only_requested

    @property
    def detunings(self) -> tuple[float, ...]:
        return self.delta_c if self.topology in ("Ccq", "Scq") else self.delta_q

    def scale(self, name: str, j: int) -> float:
        if self.scales is None or name not in self.scales:
            return 1.0
        N = self.N
        k = j + N if j < 0 else j + N - 1
        return self.scales[name][k]

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in list(d.items()):
            if isinstance(v, tuple):
                d[k] = list(v)
        if self.disorder is not None:
            d["disorder"]["targets"] = list(self.disorder.targets)
        if self.scales is not None:
            d["scales"] = {k: list(v) for k, v in self.scales.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown ModelSpec fields {sorted(unknown)}")
        if d.get("disorder") is not None:
            d["disorder"] = DisorderSpec(**d["disorder"])
        if d.get("n_max") is not None:
            d["n_max"] = tuple(d["n_max"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def n_cavities(topology: str, N: int) -> int:
    return 2 * N + 1 if topology in ("Ccq", "Scq") else 1


def default_n_max(topology: str, N: int) -> tuple[int, ...]:
    if topology in ("Ccq", "Scq"):
        return tuple(2 if j == 0 else 1 for j in range(-N, N + 1))
    return (2,)


def expected_lengths(topology: str, N: int) -> dict[str, int]:
    if topology in ("Ccq", "Scq"):
        return {"delta_c": N, "g": N, "eta_c": N, "delta_q": 0, "eta_q": 0}
    if topology == "Cq":
        return {"delta_q": N, "g": 1, "eta_q": N - 1, "delta_c": 0, "eta_c": 0}
    return {"delta_q": N, "g": N, "delta_c": 0, "eta_c": 0, "eta_q": 0}


def cavity_indices(spec: ModelSpec) -> list[int]:
    if spec.topology in ("Ccq", "Scq"):
        return list(range(-spec.N, spec.N + 1))
    return [0]


def qubit_indices(spec: ModelSpec) -> list[int]:
    return [j for j in range(-spec.N, spec.N + 1) if j != 0]


# -- space and ladder operators ---------------------------------------------

def build_space(spec: ModelSpec) -> HilbertSpace:
    sites = []
    for j, nm in zip(cavity_indices(spec), spec.n_max):
        if spec.qubit_only:
            sites.append(SiteDescriptor("qubit", j, 2, companion=True))
        else:
            sites.append(SiteDescriptor("boson", j, nm + 1))
    for j in qubit_indices(spec):
        sites.append(SiteDescriptor("qubit", j, 2))
    return HilbertSpace(tuple(sites))


def _cavity_lowering(space: HilbertSpace, j: int) -> Operator:
    site = space.site(("c", j))
    if site.kind == "qubit":
        return local_embed(space, ("c", j), SIGMA_MINUS)
    return local_embed(space, ("c", j), boson_annihilate(site.local_dim - 1))


def _cavity_vacuum_index(site: SiteDescriptor) -> int:
    # companion qubits rest in |->, which is basis index 1
    return 1 if site.kind == "qubit" else 0


def chi(j: int, topology: str) -> int:
    """Topology-dependent pair phase; ``chi(0) = 1`` and ``chi(-j) = chi(j)``."""
    j = abs(j)
    if j == 0:
        return 1
    if topology == "Ccq":
        return (-1) ** j
    if topology == "Cq":
        return (-1) ** (j + 1)
    if topology == "Scq":
        return -1
    if topology == "Sq":
        return 1
    raise SpecError(f"unknown topology {topology!r}")


def squeeze_coefficients(n_bar: float) -> tuple[float, float]:
    """``(cosh r, sinh r) = (sqrt(n+1), sqrt(n))``."""
    return math.sqrt(n_bar + 1.0), math.sqrt(n_bar)


def squeeze_parameter(n_bar: float) -> float:
    return math.atanh(math.sqrt(n_bar / (n_bar + 1.0)))


# -- Hamiltonian pieces -------------------------------------------------------

@dataclass
class _Pieces:
    """Hamiltonian split into cavity-only, qubit-only and coupling terms.

    ``jc`` lists Jaynes-Cummings terms ``coef * (b_k^+ sigma_q + h.c.)`` as
    ``(coef, k, q)``.
    """

    H_c: Operator
    H_q: Operator
    jc: list


def _hamiltonian_pieces(spec: ModelSpec, space: HilbertSpace) -> _Pieces:
    t, N = spec.topology, spec.N
    H_c = zero_operator(space)
    H_q = zero_operator(space)
    jc = []
    sz = {j: local_embed(space, ("q", j), SIGMA_Z) for j in qubit_indices(spec)}
    sm = {j: local_embed(space, ("q", j), SIGMA_MINUS) for j in qubit_indices(spec)}
    if t in ("Ccq", "Scq"):
        b = {j: _cavity_lowering(space, j) for j in cavity_indices(spec)}
        for j in range(1, N + 1):
            d, gj, eta = spec.delta_c[j - 1], spec.g[j - 1], spec.eta_c[j - 1]
            for s in (1, -1):
                sj = s * j
                n_op = b[sj].dag() @ b[sj]
                H_c = H_c + (s * d * spec.scale("delta", sj)) * n_op
                if t == "Ccq":
                    hop = b[sj].dag() @ b[s * (j - 1)]
                else:
                    hop = b[0].dag() @ b[sj]
                hop = (eta * spec.scale("eta", sj)) * hop
                H_c = H_c + hop + hop.dag()
                jc.append((gj * spec.scale("g", sj), sj, sj))
    else:
        for j in range(1, N + 1):
            d = spec.delta_q[j - 1]
            for s in (1, -1):
                sj = s * j
                H_q = H_q + (0.5 * s * d * spec.scale("delta", sj)) * sz[sj]
        if t == "Cq":
            g1 = spec.g[0]
            for s in (1, -1):
                jc.append((g1 * spec.scale("g", s), 0, s))
            for j in range(2, N + 1):
                eta = spec.eta_q[j - 2]
                for s in (1, -1):
                    sj = s * j
                    hop = (eta * spec.scale("eta", sj)) * (sm[sj].dag() @ sm[s * (j - 1)])
                    H_q = H_q + hop + hop.dag()
        else:
            for j in range(1, N + 1):
                for s in (1, -1):
                    jc.append((spec.g[j - 1] * spec.scale("g", s * j), 0, s * j))
    return _Pieces(H_c, H_q, jc)


def _jc_operator(spec: ModelSpec, space: HilbertSpace, jc, squeezed: bool) -> Operator:
    u, v = squeeze_coefficients(spec.n_bar)
    H = zero_operator(space)
    for coef, k, q in jc:
        bk = _cavity_lowering(space, k)
        sq = local_embed(space, ("q", q), SIGMA_MINUS)
        if squeezed:
            # b_k^+ -> sqrt(n+1) b_k^+ + chi_k sqrt(n) b_{-k}
            bk_dag = u * bk.dag() + (chi(k, spec.topology) * v) * _cavity_lowering(space, -k)
        else:
            bk_dag = bk.dag()
        term = coef * (bk_dag @ sq)
        H = H + term + term.dag()
    return H


def _hermitian(op: Operator) -> Operator:
    return Operator(op.space, op.matrix, hermitian=True)


def build_hamiltonian_original(spec: ModelSpec) -> Operator:
    if spec.representation != "original":
        raise SpecError("build_hamiltonian_original needs representation='original'")
    space = build_space(spec)
    p = _hamiltonian_pieces(spec, space)
    return _hermitian(p.H_c + p.H_q + _jc_operator(spec, space, p.jc, squeezed=False))


def build_hamiltonian_squeezed(spec: ModelSpec) -> Operator:
    """H_c + H_q + Bogoliubov-transformed cavity-qubit coupling.

    With all ``n_max == 1`` the cavities are companion qubits and this is the
    qubit-only Hamiltonian.
    """
    if spec.representation != "squeezed":
        raise SpecError("build_hamiltonian_squeezed needs representation='squeezed'")
    space = build_space(spec)
    p = _hamiltonian_pieces(spec, space)
    return _hermitian(p.H_c + p.H_q + _jc_operator(spec, space, p.jc, squeezed=True))


def build_hamiltonian(spec: ModelSpec) -> Operator:
    if spec.representation == "original":
        return build_hamiltonian_original(spec)
    return build_hamiltonian_squeezed(spec)


def hamiltonian_parts(spec: ModelSpec) -> dict[str, Operator]:
    """``{"c": H_c, "q": H_q, "cq": coupling}`` in the model's representation."""
    space = build_space(spec)
    p = _hamiltonian_pieces(spec, space)
    cq = _jc_operator(spec, space, p.jc, squeezed=spec.representation == "squeezed")
    return {"c": p.H_c, "q": p.H_q, "cq": cq}


def build_hamiltonian_qubit_only(spec: ModelSpec) -> Operator:
    if not spec.qubit_only:
        raise SpecError("qubit-only Hamiltonian needs every n_max == 1 (squeezed representation)")
    return build_hamiltonian_squeezed(spec)


def anisotropic_couplings(g: float, n_bar: float, chi_j: int) -> tuple[float, float]:
    """``(g_x, g_y)`` of the XY coupling between the central and a pair qubit."""
    u, v = squeeze_coefficients(n_bar)
    return 0.5 * g * (u + chi_j * v), 0.5 * g * (u - chi_j * v)


def build_hamiltonian_qubit_only_pauli(spec: ModelSpec) -> Operator:
    """Qubit-only Hamiltonian written directly as Pauli strings.

    Independent of the ladder-operator substitution used by
    :func:`build_hamiltonian_qubit_only`; intended as a cross-check.  Only
    symmetric (undisordered) specs are supported.
    """
    if not spec.qubit_only:
        raise SpecError("Pauli form needs every n_max == 1 (squeezed representation)")
    if spec.scales is not None:
        raise SpecError("Pauli form is defined for symmetric parameters only")
    space = build_space(spec)
    t, N = spec.topology, spec.N
    u, v = squeeze_coefficients(spec.n_bar)

    def P(**ops):
        out = None
        for key, m in ops.items():
            kind, _, idx = key.partition("_")
            j = int(idx.replace("m", "-"))
            e = local_embed(space, (kind, j), m)
            out = e if out is None else out @ e
        return out

    def lab(kind, j):
        return f"{kind}_{j}".replace("-", "m")

    H = zero_operator(space)
    for j in range(1, N + 1):
        for z in (1, -1):
            if t in ("Ccq", "Scq"):
                d, eta, gj = spec.delta_c[j - 1], spec.eta_c[j - 1], spec.g[j - 1]
                cj = chi(j, t)
                H = H + (0.5 * z * d) * P(**{lab("c", z * j): SIGMA_Z})
                other = z * (j - 1) if t == "Ccq" else 0
                H = H + (eta / 2) * (
                    P(**{lab("c", z * j): SIGMA_X, lab("c", other): SIGMA_X})
                    + P(**{lab("c", z * j): SIGMA_Y, lab("c", other): SIGMA_Y})
                )
                H = H + (gj / 2) * (
                    u * P(**{lab("c", z * j): SIGMA_X, lab("q", z * j): SIGMA_X})
                    + cj * v * P(**{lab("c", z * j): SIGMA_X, lab("q", -z * j): SIGMA_X})
                    + u * P(**{lab("c", z * j): SIGMA_Y, lab("q", z * j): SIGMA_Y})
                    - cj * v * P(**{lab("c", z * j): SIGMA_Y, lab("q", -z * j): SIGMA_Y})
                )
            else:
                H = H + (0.5 * z * spec.delta_q[j - 1]) * P(**{lab("q", z * j): SIGMA_Z})
                if t == "Sq" or j == 1:
                    gx, gy = anisotropic_couplings(spec.g[j - 1], spec.n_bar, chi(j, t))
                    H = H + gx * P(**{lab("c", 0): SIGMA_X, lab("q", z * j): SIGMA_X})
                    H = H + gy * P(**{lab("c", 0): SIGMA_Y, lab("q", z * j): SIGMA_Y})
                if t == "Cq" and j >= 2:
                    eta = spec.eta_q[j - 2]
                    H = H + (eta / 2) * (
                        P(**{lab("q", z * j): SIGMA_X, lab("q", z * (j - 1)): SIGMA_X})
                        + P(**{lab("q", z * j): SIGMA_Y, lab("q", z * (j - 1)): SIGMA_Y})
                    )
    return _hermitian(H)


def tau_operator(spec: ModelSpec, j: int) -> Operator:
    """``sqrt(n+1) sigma_j + chi_j sqrt(n) sigma_{-j}^+`` on the full space."""
    if j == 0 or abs(j) > spec.N:
        raise SpecError(f"tau_j needs 1 <= |j| <= N, got j={j}")
    space = build_space(spec)
    u, v = squeeze_coefficients(spec.n_bar)
    s_j = local_embed(space, ("q", j), SIGMA_MINUS)
    s_mj = local_embed(space, ("q", -j), SIGMA_MINUS)
    return u * s_j + (chi(j, spec.topology) * v) * s_mj.dag()


# -- dissipation ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JumpOperator:
    """Contributes ``rate * (A rho A^+ - {A^+ A, rho}/2)`` to d rho/dt."""

    op: Operator
    rate: float
    name: str = ""

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("jump rate must be positive")


def build_jump_operators(spec: ModelSpec) -> list[JumpOperator]:
    space = build_space(spec)
    b0 = _cavity_lowering(space, 0)
    if spec.representation == "original":
        u, v = squeeze_coefficients(spec.n_bar)
        jumps = [JumpOperator(u * b0 - v * b0.dag(), spec.kappa, "beta_0")]
    else:
        jumps = [JumpOperator(b0, spec.kappa, "sigma_c0" if spec.qubit_only else "b_0")]
    if spec.gamma > 0:
        for j in qubit_indices(spec):
            jumps.append(
                JumpOperator(local_embed(space, ("q", j), SIGMA_Z), spec.gamma, f"dephase_{j}")
            )
    return jumps


# -- analytic states -----------------------------------------------------------

def pair_amplitudes(n_bar: float) -> tuple[float, float]:
    """Amplitudes ``(a, b)`` of ``a|--> - chi b|++>``."""
    return math.sqrt((n_bar + 1) / (2 * n_bar + 1)), math.sqrt(n_bar / (2 * n_bar + 1))


def _pair_state_vector(space: HilbertSpace, spec: ModelSpec, fixed: dict) -> np.ndarray:
    a, b = pair_amplitudes(spec.n_bar)
    vec = np.zeros(space.total_dim, dtype=complex)
    N = spec.N
    for choice in product((0, 1), repeat=N):  # 0: |-->, 1: |++>
        idx = dict(fixed)
        amp = 1.0
        for j, c in zip(range(1, N + 1), choice):
            if c:
                amp *= -chi(j, spec.topology) * b
                idx[("q", j)] = idx[("q", -j)] = 0
            else:
                amp *= a
                idx[("q", j)] = idx[("q", -j)] = 1
        if amp == 0.0:
            continue
        vec[space.basis_index([idx[lab] for lab in space.labels])] += amp
    return vec


def analytic_qubit_state(spec: ModelSpec) -> PureState:
    """Product of entangled ``(j, -j)`` pairs on the 2N-qubit register."""
    full = build_space(spec)
    sub = HilbertSpace(tuple(s for s in full.sites if s.label[0] == "q"))
    return PureState(sub, _pair_state_vector(sub, spec, {}))


def analytic_full_state(spec: ModelSpec) -> PureState:
    """Cavities in their (squeezed-frame) vacuum times the analytic qubit state."""
    space = build_space(spec)
    fixed = {s.label: _cavity_vacuum_index(s) for s in space.sites if s.label[0] == "c"}
    state = PureState(space, _pair_state_vector(space, spec, fixed))
    if spec.representation == "original":
        U = squeeze_unitary(spec)
        state = PureState(space, U.matrix @ state.vector)
    return state


def squeeze_unitary(spec: ModelSpec) -> Operator:
    """Truncated squeezing unitary ``U_c`` (validation use only).

    The exponential is taken of the truncated generator, so it is unitary but
    reproduces the Bogoliubov transformation only away from the top Fock
    levels.
    """
    space = build_space(spec)
    if space.total_dim > SQUEEZE_DIM_CAP:
        raise SpecError(f"squeeze_unitary limited to dim <= {SQUEEZE_DIM_CAP}")
    r = squeeze_parameter(spec.n_bar)
    b0 = _cavity_lowering(space, 0)
    G = (r / 2) * (b0.dag() @ b0.dag() - b0 @ b0)
    if spec.topology in ("Ccq", "Scq"):
        for j in range(1, spec.N + 1):
            bj, bmj = _cavity_lowering(space, j), _cavity_lowering(space, -j)
            G = G + (chi(j, spec.topology) * r) * (bj.dag() @ bmj.dag() - bj @ bmj)
    U = scipy.linalg.expm(G.toarray())
    return Operator(space, sp.csr_matrix(U))


def chiral_permutation(spec: ModelSpec) -> sp.csr_matrix:
    """Basis permutation exchanging every site ``j`` with ``-j``."""
    space = build_space(spec)
    mapping = {}
    for lab in space.labels:
        kind, j = lab
        if j != 0:
            mapping[lab] = (kind, -j)
    return permutation_matrix(space, mapping)


# -- disorder ------------------------------------------------------------------

def disorder_rng(seed: int, realization: int) -> np.random.Generator:
    """Counter-based stream for one realization; independent of draw order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(realization),))
    return np.random.Generator(np.random.Philox(ss))


def apply_disorder(spec: ModelSpec, realization_index: int) -> ModelSpec:
    """Concrete spec with independent left/right multiplicative perturbations.

    Every realization draws the same three arrays of uniform numbers in
    ``[-1, 1]`` (detunings, couplings g, hoppings eta) regardless of the
    targets, then scales them by ``r_max``.  Changing the targets or r_max
    therefore reuses the same random numbers.
    """
    dis = spec.disorder
    if dis is None:
        raise SpecError("spec has no disorder")
    if not 0 <= realization_index < dis.realizations:
        raise SpecError(f"realization {realization_index} outside [0, {dis.realizations})")
    rng = disorder_rng(dis.seed, realization_index)
    n = 2 * spec.N
    u_delta, u_g, u_eta = (rng.uniform(-1.0, 1.0, n) for _ in range(3))
    scales = {}
    if "detunings" in dis.targets:
        scales["delta"] = tuple(1.0 + dis.r_max * u_delta)
    if "couplings" in dis.targets:
        scales["g"] = tuple(1.0 + dis.r_max * u_g)
        scales["eta"] = tuple(1.0 + dis.r_max * u_eta)
    if dis.r_max == 0.0:
        scales = {}
    return replace(spec, scales=scales or None)
