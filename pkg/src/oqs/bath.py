"""Ohmic bath with Drude cutoff: correlation function and its half-Fourier
transform G_t(Delta) = g_t(Delta) + i h_t(Delta).

Units: hbar = 1, energies and rates in the same unit (J for the chain).

The correlation function is an exponential sum

    C_tau = c_0 exp(-Ec tau) + sum_{l>=1} c_l exp(-nu_l tau),
    c_0 = (gamma Ec^2 / 2) [cot(beta Ec / 2) - i],
    c_l = -(2 gamma / beta) nu_l / (1 - (nu_l / Ec)^2),   nu_l = 2 pi l / beta.

The Matsubara amplitudes decay only like 1/l, so C_0 itself is
log-divergent. Transforms converge (terms ~ 1/l^2); terms beyond ``l_max`` are
resummed exactly with digamma functions, and the finite-time remainder is
summed until it drops below ``tol``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expn, psi, zeta

from .errors import DegenerateCutoffError

POLE_RTOL = 1e-6
_EXPLICIT_CAP = 2048
_CORR_CAP = 200_000


@dataclass(frozen=True)
class DrudeSpectralDensity:
    gamma: float
    Ec: float

    def __post_init__(self):
        if not (self.gamma > 0 and self.Ec > 0):
            raise ValueError("gamma and Ec must be positive")

    def __call__(self, delta):
        delta = np.asarray(delta, dtype=float)
        return self.gamma * delta / (1.0 + (delta / self.Ec) ** 2)


@dataclass(frozen=True)
class CorrelationValue:
    g: np.ndarray
    h: np.ndarray

    @property
    def complex(self):
        return self.g + 1j * self.h


def _check_pole(xi: float) -> None:
    l = round(xi / (2 * np.pi))
    if l >= 1 and abs(xi - 2 * np.pi * l) <= POLE_RTOL * xi:
        raise DegenerateCutoffError(
            f"beta*Ec = {xi:.8g} collides with Matsubara pole l={l}; "
            "perturb Ec slightly"
        )


@dataclass(frozen=True)
class CorrelationExpSum:
    spectral: DrudeSpectralDensity
    beta: float
    amplitudes: np.ndarray
    rates: np.ndarray
    tol: float = 1e-10
    renormalized: bool = False

    @property
    def gamma(self) -> float:
        return self.spectral.gamma

    @property
    def Ec(self) -> float:
        return self.spectral.Ec

    @property
    def l_max(self) -> int:
        return len(self.rates) - 1

    @property
    def _omega(self) -> float:
        return 2 * np.pi / self.beta

    @property
    def _K(self) -> float:
        # c_l / (nu_l + z) = K * l / ((l - e)(l + e)(l + s))
        return 2 * self.gamma * self.Ec**2 / (self.beta * self._omega**2)

    @property
    def scale(self) -> float:
        return self.gamma * (1.0 / self.beta + self.Ec)

    def matsubara_amplitude(self, l):
        nu = self._omega * np.asarray(l, dtype=float)
        return -(2 * self.gamma / self.beta) * nu / (1 - (nu / self.Ec) ** 2)

    def correlation(self, tau) -> np.ndarray:
        """C_tau for tau > 0 (the series diverges at tau = 0)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any(tau <= 0):
            raise ValueError("C_tau is log-divergent at tau=0; need tau > 0")
        out = self.amplitudes[None, :] * np.exp(-np.outer(tau, self.rates))
        total = out.sum(axis=1)
        # remaining Matsubara terms decay like exp(-nu_l tau) / l
        tmin = tau.min()
        L = self.l_max
        n_extra = int(np.ceil(np.log(1.0 / self.tol) / (self._omega * tmin))) + 1
        n_extra = min(n_extra, _CORR_CAP)
        if n_extra > 0:
            l = np.arange(L + 1, L + 1 + n_extra)
            c = self.matsubara_amplitude(l)
            nu = self._omega * l
            total = total + (c[None, :] * np.exp(-np.outer(tau, nu))).sum(axis=1)
        return total

    def G(self, delta, t=np.inf) -> np.ndarray:
        """G_t(Delta) = int_0^t exp(-i Delta tau) C_tau d tau, vectorized."""
        delta = np.asarray(delta, dtype=float)
        shape = delta.shape
        d = delta.ravel()
        uniq, inv = np.unique(d, return_inverse=True)
        if t == 0:
            vals = np.zeros(uniq.shape, dtype=complex)
        else:
            vals = self._G_inf_cached(uniq)
            if np.isfinite(t):
                vals = vals - self._remainder(uniq, float(t))
            if self.renormalized:
                # counterterm cancelling the damping kernel h_inf(0)
                vals = vals + 0.5j * self.gamma * self.Ec
        return vals[inv].reshape(shape)

    def value(self, delta, t=np.inf) -> CorrelationValue:
        G = self.G(delta, t)
        return CorrelationValue(G.real, G.imag)

    def _G_inf_cached(self, delta: np.ndarray) -> np.ndarray:
        # time-dependent generators ask for the same splittings at every stage
        key = delta.tobytes()
        cache = self.__dict__.setdefault("_ginf_cache", {})
        if key not in cache:
            if len(cache) > 64:
                cache.clear()
            cache[key] = self._G_inf(delta)
        return cache[key]

    def _G_inf(self, delta: np.ndarray) -> np.ndarray:
        z = 1j * delta
        out = (self.amplitudes[None, :] / (self.rates[None, :] + z[:, None])).sum(axis=1)
        om = self._omega
        e = self.Ec / om
        s = z / om
        A = 0.5 / (e + s)
        B = 0.5 / (s - e)
        C = -s / (s * s - e * e)
        L1 = self.l_max + 1
        tail = -(A * psi(L1 - e) + B * psi(L1 + e) + C * psi(L1 + s))
        return out + self._K * tail

    def _remainder(self, delta: np.ndarray, t: float) -> np.ndarray:
        # sum_j c_j exp(-(kappa_j + i Delta) t) / (kappa_j + i Delta), all j
        z = 1j * delta
        c0, k0 = self.amplitudes[0], self.rates[0]
        out = c0 * np.exp(-(k0 + z) * t) / (k0 + z)
        om = self._omega
        a = om * t
        e = self.Ec / om
        s = z / om
        # smallest M with K exp(-a M) / (M^2 (1 - exp(-a))) below tol * scale
        bound = lambda M: 2 * self._K * np.exp(-a * M) / (M * M * -np.expm1(-a))
        cap = max(_EXPLICIT_CAP, int(8 * max(e, np.abs(s).max(initial=0.0))))
        M = max(self.l_max, 8)
        while bound(M) > self.tol * self.scale and M < cap:
            M = min(2 * M, cap)
        phase = np.exp(-z * t)
        l = np.arange(1, M + 1, dtype=float)
        nu = om * l
        w = self.matsubara_amplitude(l) * np.exp(-nu * t)
        out = out + phase * (w[None, :] / (nu[None, :] + z[:, None])).sum(axis=1)
        if bound(M) > self.tol * self.scale:
            # terms are K exp(-a l) l / ((l^2 - e^2)(l + s)); expand in 1/l and
            # sum each power by the midpoint rule, sum_{l>M} f(l) ~ int_{M+1/2}
            m = M + 0.5
            coef = (np.ones_like(s), -s, s * s + e * e, -s * (s * s + e * e))
            tail = sum(c * m ** (-1 - k) * expn(k + 2, a * m) for k, c in enumerate(coef))
            out = out + self._K * phase * tail
        return out


def correlation_exp_sum(
    J: DrudeSpectralDensity,
    beta: float,
    tol: float = 1e-10,
    l_max: Optional[int] = None,
    renormalized: bool = False,
) -> CorrelationExpSum:
    if beta <= 0:
        raise ValueError("beta must be positive")
    xi = beta * J.Ec
    _check_pole(xi)
    om = 2 * np.pi / beta
    if l_max is None:
        # explicit terms until nu_l clears the Drude pole; digamma resums the rest
        l_max = max(4, int(np.ceil(2 * J.Ec / om)) + 1)
    else:
        l_max = max(int(l_max), int(np.floor(J.Ec / om)) + 1)
    l = np.arange(1, l_max + 1, dtype=float)
    nu = om * l
    c_mats = -(2 * J.gamma / beta) * nu / (1 - (nu / J.Ec) ** 2)
    c0 = 0.5 * J.gamma * J.Ec**2 * (1.0 / np.tan(xi / 2) - 1j)
    amps = np.concatenate([[c0], c_mats.astype(complex)])
    rates = np.concatenate([[J.Ec], nu])
    amps.setflags(write=False)
    rates.setflags(write=False)
    return CorrelationExpSum(J, float(beta), amps, rates, tol, renormalized)


def g_inf(delta, J: DrudeSpectralDensity, beta: float):
    """J(Delta) / (exp(beta Delta) - 1), continuous through Delta = 0."""
    delta = np.asarray(delta, dtype=float)
    x = beta * delta
    small = np.abs(x) < 1e-6
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        regular = J(delta) / np.expm1(x)
        # J(D)/(beta D) (1 - x/2 + x^2/12)
        series = J.gamma / (beta * (1 + (delta / J.Ec) ** 2)) * (1 - x / 2 + x * x / 12)
    out = np.where(small, series, regular)
    return out if out.ndim else float(out)


def _thermal_sum(delta: np.ndarray, J: DrudeSpectralDensity, beta: float, l_max: int):
    # (2/beta) sum_l nu_l / ((D^2 + nu_l^2)(1 - nu_l^2/Ec^2)), explicit + zeta tail
    om = 2 * np.pi / beta
    E = J.Ec
    l = np.arange(1, l_max + 1, dtype=float)
    nu = om * l
    terms = nu[None, :] / ((delta[:, None] ** 2 + nu[None, :] ** 2) * (1 - (nu[None, :] / E) ** 2))
    head = terms.sum(axis=1)
    d2 = delta**2
    tail = np.zeros_like(delta)
    for n in range(0, 40):
        cn = (E ** (2 * (n + 1)) - (-d2) ** (n + 1)) / (E**2 + d2)
        term = cn * om ** (-(3 + 2 * n)) * zeta(3 + 2 * n, l_max + 1)
        tail += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(tail)):
            break
    return (2 / beta) * (head - E**2 * tail)


def h_inf_parts(delta, J: DrudeSpectralDensity, beta: float, l_max: Optional[int] = None):
    """Split h_inf(Delta) into (damping kernel, vacuum, thermal) parts."""
    delta = np.asarray(delta, dtype=float)
    scalar = delta.ndim == 0
    d = np.atleast_1d(delta)
    xi = beta * J.Ec
    _check_pole(xi)
    om = 2 * np.pi / beta
    need = int(np.ceil(8 * max(J.Ec, np.abs(d).max(initial=0.0)) / om)) + 1
    L = max(need, 64) if l_max is None else max(int(l_max), need)
    g, E = J.gamma, J.Ec
    damping = np.full_like(d, -0.5 * g * E)
    vacuum = g * d**2 * E / (2 * (E**2 + d**2))
    bracket = -E**2 / (2 * (E**2 + d**2)) / np.tan(xi / 2) + _thermal_sum(d, J, beta, L)
    thermal = d * g * bracket
    if scalar:
        return float(damping[0]), float(vacuum[0]), float(thermal[0])
    return damping, vacuum, thermal


def chi(xi: float, rtol: float = 1e-12) -> float:
    """cot(xi/2)/2 + (xi^2/pi) sum_l 1 / (l ((2 pi l)^2 - xi^2)).

    Defined so that the high-temperature, large-cutoff thermal shift is
    h_th(Delta) -> -gamma Delta chi.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    _check_pole(xi)
    q = (xi / (2 * np.pi)) ** 2
    total = 0.0
    l = 0
    lmin = int(np.ceil(2 * np.sqrt(q))) + 8
    while True:
        l += 1
        term = 1.0 / (l * ((2 * np.pi * l) ** 2 - xi**2))
        total += term
        if l >= lmin and abs(term) < rtol * abs(total):
            break
    # sum_{k>l} 1/(4 pi^2 k^3) sum_n q^n / k^(2n)
    tail = 0.0
    for n in range(0, 60):
        t = q**n * zeta(3 + 2 * n, l + 1) / (4 * np.pi**2)
        tail += t
        if t < 1e-18 * tail:
            break
    return 0.5 / np.tan(xi / 2) + xi**2 / np.pi * (total + tail)


def G_t(delta, corr, t=np.inf) -> CorrelationValue:
    return corr.value(delta, t)


@dataclass(frozen=True)
class ConstantCorrelation:
    """Singular-coupling fixture C_tau = alpha delta(tau): G_t = alpha for t > 0."""

    alpha: complex

    def G(self, delta, t=np.inf):
        delta = np.asarray(delta, dtype=float)
        val = 0.0 if t == 0 else self.alpha
        return np.full(delta.shape, val, dtype=complex)

    def value(self, delta, t=np.inf) -> CorrelationValue:
        G = self.G(delta, t)
        return CorrelationValue(G.real, G.imag)


@dataclass(frozen=True)
class ScaledCorrelation:
    base: object
    factor: complex

    def G(self, delta, t=np.inf):
        return self.factor * self.base.G(delta, t)

    def value(self, delta, t=np.inf) -> CorrelationValue:
        G = self.G(delta, t)
        return CorrelationValue(G.real, G.imag)


@dataclass(frozen=True)
class ConjugateCorrelation:
    """Transform of C_tau^*: G'(Delta) = conj(G(-Delta))."""

    base: object

    def G(self, delta, t=np.inf):
        return np.conj(self.base.G(-np.asarray(delta, dtype=float), t))

    def value(self, delta, t=np.inf) -> CorrelationValue:
        G = self.G(delta, t)
        return CorrelationValue(G.real, G.imag)


def drude_bath(gamma: float, Ec: float, T: float, tol: float = 1e-10,
               renormalized: bool = False) -> CorrelationExpSum:
    return correlation_exp_sum(DrudeSpectralDensity(gamma, Ec), 1.0 / T, tol=tol,
                               renormalized=renormalized)
