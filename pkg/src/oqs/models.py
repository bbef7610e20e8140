"""System Hamiltonians and coupling operators.

Conventions (hbar = 1):

* Fermion basis states are occupation bit patterns sorted ascending as
  integers. Site ``i`` (1-based) is bit ``i - 1``, so site 1 is the least
  significant bit.
* Jordan-Wigner strings run over sites with smaller index:
  ``a_i = prod_{j<i} (-1)^{n_j} sigma^-_i``.
* The oscillator Fock space keeps levels ``0 .. n_max - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .errors import ContractViolation, InvalidModelError

MAX_SITES = 16


@dataclass(frozen=True)
class FermionBasis:
    l: int
    N: int
    states: tuple

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, state: int) -> int:
        return self._lookup[state]

    @property
    def _lookup(self):
        # cached dict; frozen dataclass so store via object.__setattr__
        try:
            return self.__dict__["_lookup_cache"]
        except KeyError:
            table = {s: k for k, s in enumerate(self.states)}
            object.__setattr__(self, "_lookup_cache", table)
            return table

    def occupations(self) -> np.ndarray:
        """(dim, l) array of 0/1 occupations, column i-1 is site i."""
        s = np.array(self.states, dtype=np.int64)
        return ((s[:, None] >> np.arange(self.l)) & 1).astype(np.int8)


@dataclass(frozen=True)
class ManyBodyOperator:
    matrix: np.ndarray
    hermitian: bool = False
    basis: Optional[object] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ContractViolation(f"operator must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.hermitian:
            scale = max(np.abs(m).max(), 1e-300)
            if np.abs(m - m.conj().T).max() > 1e-12 * scale:
                raise ContractViolation("matrix flagged hermitian is not")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SpectrumDecomposition:
    energies: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    @property
    def splittings(self) -> np.ndarray:
        """Delta_qk = eps_q - eps_k."""
        e = self.energies
        return e[:, None] - e[None, :]


@dataclass(frozen=True)
class OscillatorModel:
    M: float
    Omega: float
    n_max: int
    a: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    hamiltonian: ManyBodyOperator
    coupling: ManyBodyOperator

    @property
    def adag(self) -> np.ndarray:
        return self.a.conj().T


def build_fermion_basis(l: int, N: int) -> FermionBasis:
    if l < 1 or l > MAX_SITES:
        raise InvalidModelError(f"number of sites must be in 1..{MAX_SITES}, got {l}")
    if N < 0 or N > l:
        raise InvalidModelError(f"particle number must be in 0..{l}, got {N}")
    states = tuple(s for s in range(1 << l) if bin(s).count("1") == N)
    assert len(states) == comb(l, N)
    return FermionBasis(l, N, states)


def _hop_sign(state: int, i: int, j: int) -> int:
    # sign of a_i^dag a_j |state> for i != j (0-based sites), JW string on lower sites
    lo, hi = (i, j) if i < j else (j, i)
    between = state & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    return -1 if bin(between).count("1") % 2 else 1


def build_hubbard(l: int, N: int, J: float = 1.0, V: float = 0.0) -> ManyBodyOperator:
    """Extended Hubbard chain of spinless fermions with open boundaries,

    H = -J sum_i (a_i^dag a_{i+1} + h.c.) + V sum_i n_i n_{i+1}.
    """
    basis = build_fermion_basis(l, N)
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    for k, s in enumerate(basis.states):
        for i in range(l - 1):
            ni = (s >> i) & 1
            nj = (s >> (i + 1)) & 1
            H[k, k] += V * ni * nj
            if ni != nj:
                # move the particle across the bond
                t = s ^ ((1 << i) | (1 << (i + 1)))
                src, dst = (i + 1, i) if nj else (i, i + 1)
                H[basis.index(t), k] += -J * _hop_sign(s, dst, src)
    return ManyBodyOperator(H, hermitian=True, basis=basis)


def number_operator(i: int, basis: FermionBasis) -> ManyBodyOperator:
    if not 1 <= i <= basis.l:
        raise InvalidModelError(f"site {i} outside 1..{basis.l}")
    occ = basis.occupations()[:, i - 1]
    return ManyBodyOperator(np.diag(occ.astype(complex)), hermitian=True, basis=basis)


def reflection_operator(basis: FermionBasis) -> np.ndarray:
    """Permutation matrix of the site reflection i -> l + 1 - i.

    Reordering the creation string only contributes a sign that is constant
    within a fixed-N sector, so it is dropped.
    """
    l = basis.l
    R = np.zeros((basis.dim, basis.dim))
    for k, s in enumerate(basis.states):
        t = sum(1 << (l - 1 - i) for i in range(l) if (s >> i) & 1)
        R[basis.index(t), k] = 1.0
    return R


def build_oscillator(M: float = 1.0, Omega: float = 1.0, n_max: int = 40) -> OscillatorModel:
    """Harmonic oscillator truncated to Fock levels 0..n_max-1.

    Coupling operator S = (a + a^dag)/sqrt(2) and H = Omega (a^dag a + 1/2).
    """
    if n_max < 2:
        raise InvalidModelError("n_max must be at least 2")
    if M <= 0 or Omega <= 0:
        raise InvalidModelError("M and Omega must be positive")
    a = np.diag(np.sqrt(np.arange(1, n_max)), k=1).astype(complex)
    adag = a.conj().T
    Q = np.sqrt(1.0 / (2 * M * Omega)) * (a + adag)
    P = 1j * np.sqrt(M * Omega / 2.0) * (adag - a)
    H = np.diag(Omega * (np.arange(n_max) + 0.5)).astype(complex)
    S = (a + adag) / np.sqrt(2.0)
    return OscillatorModel(
        M=M, Omega=Omega, n_max=n_max, a=a, Q=Q, P=P,
        hamiltonian=ManyBodyOperator(H, hermitian=True),
        coupling=ManyBodyOperator(S, hermitian=True),
    )


def required_fock_levels(Omega: float, T: float, tol: float = 1e-8) -> int:
    """Smallest n_max with thermal population of level n_max below tol."""
    if T <= 0:
        return 2
    x = Omega / T
    # p_n = (1 - e^-x) e^(-n x)
    n = np.log((1 - np.exp(-x)) / tol) / x
    return max(2, int(np.ceil(n)))


def check_fock_cutoff(model: OscillatorModel, T: float, tol: float = 1e-8) -> None:
    need = required_fock_levels(model.Omega, T, tol)
    if model.n_max < need:
        raise InvalidModelError(
            f"n_max={model.n_max} too small for T={T}: need at least {need} levels"
        )


def diagonalize(H: ManyBodyOperator) -> SpectrumDecomposition:
    if not H.hermitian:
        raise ContractViolation("diagonalize requires a hermitian operator")
    m = H.matrix
    eps, U = np.linalg.eigh(m)
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    resid = np.abs(m @ U - U * eps).max()
    if resid > 1e-10 * scale:
        raise ContractViolation(f"eigendecomposition residual {resid:.2e}")
    return SpectrumDecomposition(eps, U)


def to_eigenbasis(op, spec: SpectrumDecomposition) -> ManyBodyOperator:
    """U^dag op U."""
    herm = isinstance(op, ManyBodyOperator) and op.hermitian
    m = op.matrix if isinstance(op, ManyBodyOperator) else np.asarray(op)
    if m.shape != (spec.dim, spec.dim):
        raise ContractViolation(f"operator shape {m.shape} does not match dim {spec.dim}")
    U = spec.vectors
    out = U.conj().T @ m @ U
    if herm:
        out = 0.5 * (out + out.conj().T)
    return ManyBodyOperator(out, hermitian=herm)


def from_eigenbasis(m: np.ndarray, spec: SpectrumDecomposition) -> np.ndarray:
    U = spec.vectors
    return U @ m @ U.conj().T
