"""Redfield, RWA, pseudo-Lindblad and truncated Lindblad generators.

Everything works in the eigenbasis of the system Hamiltonian. Superoperators
act on column-stacked density matrices: ``vec(rho) = rho.flatten("F")`` and
``vec(A rho B) = kron(B.T, A) vec(rho)``.

For a channel with coupling S and convolution operator SS the Redfield
dissipator is

    D[rho] = S rho SS^dag + SS rho S^dag - 1/2 {S^dag SS + SS^dag S, rho}

with Lamb shift (S^dag SS - SS^dag S) / 2i; for hermitian S this is the usual
form. The pseudo-Lindblad jump operators

    A^+- = [lam^+- S +- SS / lam^+-] / sqrt(2 cos phi),  lam^+- = sqrt(lam_sq) e^(-+ i phi/2)

reproduce D exactly for any lam_sq > 0, |phi| < pi/2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bath import chi
from .errors import ContractViolation, DegenerateDecompositionError
from .models import ManyBodyOperator, SpectrumDecomposition, to_eigenbasis

SECULAR_TOL = 1e-9


# --- superoperator helpers -------------------------------------------------

def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).flatten(order="F")


def unvec(v: np.ndarray, d: Optional[int] = None) -> np.ndarray:
    if d is None:
        d = int(round(np.sqrt(v.shape[0])))
    return np.asarray(v).reshape((d, d), order="F")


def spre(A: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(A.shape[0]), A)


def spost(B: np.ndarray) -> np.ndarray:
    return np.kron(B.T, np.eye(B.shape[0]))


def sprepost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(B.T, A)


def commutator_super(H: np.ndarray) -> np.ndarray:
    """Superoperator of -i[H, .]."""
    return -1j * (spre(H) - spost(H))


def _jump_sum_super(jumps: np.ndarray, rates: np.ndarray) -> np.ndarray:
    # sum_k r_k A_k rho A_k^dag as a d^2 x d^2 matrix via one matrix product
    K, d, _ = jumps.shape
    flat = jumps.reshape(K, d * d)  # index a*d + c
    D4 = (flat.T * rates[None, :]) @ flat.conj()  # [(a,c), (b,dd)]
    D4 = D4.reshape(d, d, d, d)
    return D4.transpose(2, 0, 3, 1).reshape(d * d, d * d)


def lindblad_super(H: np.ndarray, jumps: Sequence[np.ndarray], rates=None) -> np.ndarray:
    L = commutator_super(H)
    if len(jumps) == 0:
        return L
    A = np.asarray(jumps, dtype=complex)
    r = np.ones(len(A)) if rates is None else np.asarray(rates, dtype=float)
    L = L + _jump_sum_super(A, r)
    G = np.einsum("k,kba,kbc->ac", r, A.conj(), A)
    return L - 0.5 * (spre(G) + spost(G))


def apply_lindblad(H, jumps, rates, rho):
    out = -1j * (H @ rho - rho @ H)
    for A, r in zip(jumps, rates):
        AdA = A.conj().T @ A
        out = out + r * (A @ rho @ A.conj().T - 0.5 * (AdA @ rho + rho @ AdA))
    return out


# --- domain types ----------------------------------------------------------

@dataclass(frozen=True)
class ConvolutionOperator:
    matrix: np.ndarray
    t: float


@dataclass(frozen=True)
class BathChannel:
    """One system-bath coupling term, coupling operator in the eigenbasis.

    ``adjoint=True`` marks the second channel of a non-hermitian coupling,
    whose convolution operator is (coupling^dag o G)^dag.
    """

    coupling: np.ndarray
    corr: object
    label: str = ""
    scale: float = 1.0
    adjoint: bool = False

    @classmethod
    def from_operator(cls, op, spec: SpectrumDecomposition, corr, label: str = "",
                      normalize: bool = True) -> "BathChannel":
        """Rotate ``op`` into the eigenbasis and Frobenius-normalize it."""
        S = to_eigenbasis(op, spec).matrix
        scale = float(np.linalg.norm(S))
        if normalize:
            if scale == 0:
                raise ContractViolation("coupling operator is zero")
            S = S / scale
        return cls(np.array(S), corr, label, scale)

    def convolution(self, spec: SpectrumDecomposition, t=np.inf) -> ConvolutionOperator:
        return build_convolution(self, spec, t)


@dataclass(frozen=True)
class PseudoLindbladDecomposition:
    lambda_sq: float
    phi: float
    A_plus: np.ndarray
    A_minus: np.ndarray

    @property
    def w_plus(self) -> float:
        return float(np.vdot(self.A_plus, self.A_plus).real)

    @property
    def w_minus(self) -> float:
        return float(np.vdot(self.A_minus, self.A_minus).real)


@dataclass(frozen=True)
class LindbladGenerator:
    """-i[H, rho] + sum_k rates_k D[A_k] rho, rates default to 1."""

    hamiltonian: np.ndarray
    jumps: tuple
    rates: np.ndarray
    t: float = np.inf
    kind: str = "lindblad"
    decompositions: tuple = field(default=(), compare=False)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def negative_rates(self) -> bool:
        return bool(np.any(self.rates < 0))

    def liouvillian(self) -> np.ndarray:
        return lindblad_super(self.hamiltonian, self.jumps, self.rates)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_lindblad(self.hamiltonian, self.jumps, self.rates, rho)

    def effective_hamiltonian(self) -> np.ndarray:
        H = np.array(self.hamiltonian, dtype=complex)
        for A, r in zip(self.jumps, self.rates):
            H = H - 0.5j * r * (A.conj().T @ A)
        return H


# --- operations ------------------------------------------------------------

def build_convolution(channel: BathChannel, spec: SpectrumDecomposition, t=np.inf) -> ConvolutionOperator:
    """(SS_t)_qk = S_qk G_t(Delta_qk)."""
    D = spec.splittings
    if channel.adjoint:
        X = channel.coupling.conj().T
        m = (X * channel.corr.G(D, t)).conj().T
    else:
        m = channel.coupling * channel.corr.G(D, t)
    return ConvolutionOperator(m, t)


def lamb_shift(S: np.ndarray, SS: np.ndarray) -> np.ndarray:
    SS = SS.matrix if isinstance(SS, ConvolutionOperator) else SS
    if S.shape != SS.shape:
        raise ContractViolation("coupling and convolution shapes differ")
    H = (S.conj().T @ SS - SS.conj().T @ S) / 2j
    scale = np.linalg.norm(S) * np.linalg.norm(SS)
    if np.abs(H - H.conj().T).max() > 1e-12 * max(scale, 1e-300):
        raise ContractViolation("Lamb shift is not hermitian")
    return 0.5 * (H + H.conj().T)


def redfield_dissipator_super(S: np.ndarray, SS: np.ndarray) -> np.ndarray:
    X = S.conj().T @ SS + SS.conj().T @ S
    return (sprepost(S, SS.conj().T) + sprepost(SS, S.conj().T)
            - 0.5 * (spre(X) + spost(X)))


def apply_redfield_dissipator(S, SS, rho):
    X = S.conj().T @ SS + SS.conj().T @ S
    return (S @ rho @ SS.conj().T + SS @ rho @ S.conj().T
            - 0.5 * (X @ rho + rho @ X))


def _check_channels(channels, spec):
    for ch in channels:
        if ch.coupling.shape != (spec.dim, spec.dim):
            raise ContractViolation(
                f"channel {ch.label!r} has shape {ch.coupling.shape}, expected dim {spec.dim}")


def redfield_superoperator(channels: Sequence[BathChannel], spec: SpectrumDecomposition,
                           t=np.inf) -> np.ndarray:
    _check_channels(channels, spec)
    H = np.diag(spec.energies).astype(complex)
    L = 0
    for ch in channels:
        SS = build_convolution(ch, spec, t).matrix
        H = H + lamb_shift(ch.coupling, SS)
        L = L + redfield_dissipator_super(ch.coupling, SS)
    return commutator_super(H) + L


def bohr_clusters(spec: SpectrumDecomposition, tol: float = SECULAR_TOL):
    """Label each (q, k) with the index of its Bohr-frequency cluster.

    Returns (labels[d, d], representative frequencies).
    """
    D = spec.splittings.ravel()
    order = np.argsort(D, kind="stable")
    sorted_D = D[order]
    new = np.concatenate([[True], np.diff(sorted_D) > tol])
    ids_sorted = np.cumsum(new) - 1
    labels = np.empty_like(ids_sorted)
    labels[order] = ids_sorted
    n = ids_sorted[-1] + 1
    reps = np.bincount(ids_sorted, weights=sorted_D, minlength=n) / np.bincount(ids_sorted, minlength=n)
    return labels.reshape(spec.dim, spec.dim), reps


def rwa_generator(channels: Sequence[BathChannel], spec: SpectrumDecomposition, t=np.inf,
                  tol: float = SECULAR_TOL) -> LindbladGenerator:
    """Secular (Davies) generator: one jump per channel and Bohr frequency,

    A_w = sum_{Delta_qk = w} S_qk |q><k| with rate 2 g_t(w) and Lamb shift
    sum_w h_t(w) A_w^dag A_w.
    """
    _check_channels(channels, spec)
    labels, reps = bohr_clusters(spec, tol)
    H = np.diag(spec.energies).astype(complex)
    jumps, rates = [], []
    for ch in channels:
        S = ch.coupling
        G = ch.corr.G(reps, t)
        present = np.unique(labels[np.abs(S) > 0])
        for w in present:
            A = np.where(labels == w, S, 0)
            AdA = A.conj().T @ A
            H = H + G[w].imag * AdA
            jumps.append(A)
            rates.append(2 * G[w].real)
    rates = np.array(rates)
    if np.any(rates < 0):
        warnings.warn(f"RWA rates negative at t={t} (min {rates.min():.3e}); not clamped",
                      RuntimeWarning, stacklevel=2)
    H = 0.5 * (H + H.conj().T)
    return LindbladGenerator(H, tuple(jumps), rates, t, "rwa")


def optimal_params(S: np.ndarray, SS) -> tuple:
    """Closed-form minimizer of ||A^-||^2: (lambda_sq, phi)."""
    SS = SS.matrix if isinstance(SS, ConvolutionOperator) else SS
    nS = np.linalg.norm(S)
    nSS = np.linalg.norm(SS)
    if nSS == 0 or nS == 0:
        raise DegenerateDecompositionError("convolution operator vanishes (t = 0?)")
    lam_sq = nSS / nS
    # overline(h) = Im sum conj(S) SS; this sign minimizes ||A^-||
    s = np.vdot(S, SS).imag / (nS * nSS)
    phi = float(np.arcsin(np.clip(s, -1.0, 1.0)))
    return float(lam_sq), phi


def decompose(S: np.ndarray, SS, lambda_sq: float, phi: float) -> PseudoLindbladDecomposition:
    SS = SS.matrix if isinstance(SS, ConvolutionOperator) else SS
    if not lambda_sq > 0:
        raise ContractViolation("lambda_sq must be positive")
    if not abs(phi) < np.pi / 2:
        raise ContractViolation("phi must lie in (-pi/2, pi/2)")
    lp = np.sqrt(lambda_sq) * np.exp(-0.5j * phi)
    lm = np.sqrt(lambda_sq) * np.exp(0.5j * phi)
    norm = 1.0 / np.sqrt(2 * np.cos(phi))
    Ap = norm * (lp * S + SS / lp)
    Am = norm * (lm * S - SS / lm)
    return PseudoLindbladDecomposition(float(lambda_sq), float(phi), Ap, Am)


def weights(dec: PseudoLindbladDecomposition) -> tuple:
    return dec.w_plus, dec.w_minus


def optimal_weights(S: np.ndarray, SS) -> tuple:
    """Closed-form weights at the optimum:
    +- Re tr(S SS^dag) + sqrt(|S|^2 |SS|^2 - Im tr(S SS^dag)^2)."""
    SS = SS.matrix if isinstance(SS, ConvolutionOperator) else SS
    tr = np.vdot(SS, S)
    root = np.sqrt(max(np.linalg.norm(S) ** 2 * np.linalg.norm(SS) ** 2 - tr.imag**2, 0.0))
    return tr.real + root, -tr.real + root


def pseudo_generator(channels: Sequence[BathChannel], spec: SpectrumDecomposition, t=np.inf,
                     params=None) -> LindbladGenerator:
    """Exact pseudo-Lindblad form: jumps A^+ (rate +1) and A^- (rate -1)."""
    H, decs = _coherent_and_decompositions(channels, spec, t, params)
    jumps, rates = [], []
    for dec in decs:
        jumps += [dec.A_plus, dec.A_minus]
        rates += [1.0, -1.0]
    return LindbladGenerator(H, tuple(jumps), np.array(rates), t, "pseudo", tuple(decs))


def truncated_generator(channels: Sequence[BathChannel], spec: SpectrumDecomposition, t=np.inf,
                        params=None) -> LindbladGenerator:
    """Drop the negative pseudo-Lindblad term; full Lamb shift kept.

    ``params=None`` uses the optimal (lambda_sq, phi) per channel; a fixed
    ``(lambda_sq, phi)`` pair is applied to every channel.
    """
    H, decs = _coherent_and_decompositions(channels, spec, t, params)
    jumps = tuple(dec.A_plus for dec in decs)
    return LindbladGenerator(H, jumps, np.ones(len(jumps)), t, "truncated", tuple(decs))


def _coherent_and_decompositions(channels, spec, t, params):
    _check_channels(channels, spec)
    H = np.diag(spec.energies).astype(complex)
    decs = []
    for ch in channels:
        S = ch.coupling
        SS = build_convolution(ch, spec, t).matrix
        H = H + lamb_shift(S, SS)
        if params is None and not np.any(SS):
            # t = 0: the dissipator vanishes and so do both optimal jumps
            zero = np.zeros_like(SS)
            decs.append(PseudoLindbladDecomposition(0.0, 0.0, zero, zero))
            continue
        lam_sq, phi = optimal_params(S, SS) if params is None else params
        decs.append(decompose(S, SS, lam_sq, phi))
    return H, decs


def splitting_variance(S: np.ndarray, spec: SpectrumDecomposition) -> float:
    """V[Delta] with |S_qk|^2 / ||S||^2 as the weight distribution."""
    p = np.abs(S) ** 2
    p = p / p.sum()
    D = spec.splittings
    return float((p * D**2).sum() - (p * D).sum() ** 2)


def relative_weight_expansion(beta: float, Ec: float, variance: float,
                              chi_coeff: float = 0.5) -> float:
    """High-temperature prediction of w^- / w^+ for an Ohmic-Drude bath,
    (1/16 + chi_coeff chi^2) beta^2 V[Delta].

    The default coefficient 1/2 is the published one. Expanding the optimal
    weights to second order in beta Delta gives 1/4 instead, which is what the
    exact ratio follows (see ``chi_coeff=0.25``).
    """
    c = chi(beta * Ec)
    return (1.0 / 16 + chi_coeff * c**2) * beta**2 * variance


def split_nonhermitian(S: np.ndarray, corr_1, corr_2, label: str = "") -> tuple:
    """Two channels for H_SB = (S x B + S^dag x B^dag) / 2.

    ``corr_1`` transforms tr(B^dag(tau) B rho_B) / 2 and ``corr_2`` transforms
    tr(B B^dag(tau) rho_B) / 2. Channel 1 couples through S, channel 2 through
    S^dag with convolution [int C_2 S(-tau)]^dag.
    """
    S = np.asarray(S, dtype=complex)
    return (BathChannel(S, corr_1, f"{label}1"),
            BathChannel(S.conj().T, corr_2, f"{label}2", adjoint=True))


class MasterEquation:
    """Generator family for one model and set of channels.

    ``kind`` is one of redfield, rwa, pseudo, truncated. With
    ``time_dependent=False`` the generator is frozen at t = infinity.
    """

    KINDS = ("redfield", "rwa", "pseudo", "truncated")

    def __init__(self, kind: str, channels, spec: SpectrumDecomposition,
                 time_dependent: bool = False, params=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown generator kind {kind!r}")
        self.kind = kind
        self.channels = tuple(channels)
        self.spec = spec
        self.time_dependent = time_dependent
        self.params = params
        self._frozen = None

    @property
    def dim(self) -> int:
        return self.spec.dim

    def generator(self, t=np.inf):
        if self.kind == "rwa":
            return rwa_generator(self.channels, self.spec, t)
        if self.kind == "pseudo":
            return pseudo_generator(self.channels, self.spec, t, self.params)
        if self.kind == "truncated":
            return truncated_generator(self.channels, self.spec, t, self.params)
        raise ValueError("redfield has no Lindblad generator")

    def liouvillian(self, t=np.inf) -> np.ndarray:
        if not self.time_dependent:
            if self._frozen is None:
                self._frozen = self._build(np.inf)
            return self._frozen
        return self._build(t)

    def _build(self, t):
        if self.kind == "redfield":
            return redfield_superoperator(self.channels, self.spec, t)
        return self.generator(t).liouvillian()
