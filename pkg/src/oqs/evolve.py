"""Propagation, steady states, error measures and observables.

Density matrices live in the energy eigenbasis of the system Hamiltonian,
like the generators built in :mod:`oqs.dissipators`.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp, trapezoid

from .dissipators import unvec, vec
from .errors import ContractViolation, DegenerateSteadyStateError, StiffnessError
from .models import SpectrumDecomposition

DENSE_LIMIT = 5000


@dataclass
class SimulationRecord:
    times: np.ndarray
    states: np.ndarray  # (n_t, d, d)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ContractViolation("time grid must be strictly increasing")


def check_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ContractViolation("density matrix is not hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ContractViolation(f"density matrix trace {np.trace(rho).real:.12f} != 1")


def _liouvillian_source(gen) -> Union[np.ndarray, Callable]:
    if isinstance(gen, np.ndarray):
        return gen
    if hasattr(gen, "time_dependent"):  # MasterEquation
        return gen.liouvillian if gen.time_dependent else gen.liouvillian(np.inf)
    if hasattr(gen, "liouvillian"):
        return gen.liouvillian()
    if callable(gen):
        return gen
    raise TypeError(f"cannot build a Liouvillian from {type(gen).__name__}")


def propagate(gen, rho0: np.ndarray, t_grid, rtol: float = 1e-8, atol: float = 1e-10,
              meta: Optional[dict] = None) -> SimulationRecord:
    """Integrate d vec(rho)/dt = L(t) vec(rho) and sample on ``t_grid``.

    Frozen generators are stepped exactly with exp(L dt) on a uniform grid;
    time-dependent ones use an embedded Runge-Kutta pair (DOP853) with the
    Liouvillian rebuilt at every stage time.
    """
    check_density_matrix(rho0)
    t_grid = np.asarray(t_grid, dtype=float)
    d = rho0.shape[0]
    src = _liouvillian_source(gen)
    y0 = vec(rho0).astype(complex)
    if isinstance(src, np.ndarray):
        states = _propagate_frozen(src, y0, t_grid)
    else:
        states = _propagate_ivp(src, y0, t_grid, rtol, atol)
    states = states.reshape(len(t_grid), d, d).transpose(0, 2, 1)  # column-major unvec
    traces = np.einsum("tii->t", states)
    drift = np.abs(traces - 1).max()
    if drift > 1e-8:
        raise StiffnessError(f"trace drift {drift:.2e} exceeds 1e-8", float(t_grid[-1]))
    return SimulationRecord(t_grid, states, dict(meta or {}, trace_drift=float(drift)))


def _propagate_frozen(L, y0, t_grid):
    out = np.empty((len(t_grid), y0.shape[0]), dtype=complex)
    steps = np.diff(t_grid)
    y = y0 if t_grid[0] == 0 else sla.expm(L * t_grid[0]) @ y0
    out[0] = y
    uniform = len(steps) > 0 and np.allclose(steps, steps[0], rtol=1e-12, atol=0)
    P = sla.expm(L * steps[0]) if uniform else None
    for k, dt in enumerate(steps, start=1):
        y = (P if uniform else sla.expm(L * dt)) @ y
        out[k] = y
    return out


def _propagate_ivp(Lfun, y0, t_grid, rtol, atol):
    sol = solve_ivp(lambda t, y: Lfun(t) @ y, (t_grid[0], t_grid[-1]), y0,
                    method="DOP853", t_eval=t_grid, rtol=rtol, atol=atol)
    if sol.status != 0:
        t_reached = float(sol.t[-1]) if sol.t.size else float(t_grid[0])
        raise StiffnessError(f"integration failed at t={t_reached}: {sol.message}", t_reached)
    return sol.y.T


def steady_state(gen, check_unique: bool = True) -> np.ndarray:
    """Solve L vec(rho) = 0 with tr(rho) = 1 by dense LU.

    The equation for rho_00 is replaced by the trace condition. Uniqueness is
    verified through the second-smallest singular value (small systems) or by
    re-solving with the last diagonal equation replaced instead.
    """
    L = _liouvillian_source(gen)
    if callable(L) and not isinstance(L, np.ndarray):
        L = L(np.inf)
    n = L.shape[0]
    d = int(round(np.sqrt(n)))
    if n > DENSE_LIMIT:
        raise ContractViolation(f"dense steady-state solve limited to dim^2 <= {DENSE_LIMIT}")
    diag_idx = np.arange(d) * (d + 1)
    trace_row = np.zeros(n, dtype=complex)
    trace_row[diag_idx] = 1.0

    def solve(row):
        A = np.array(L, dtype=complex)
        A[row] = trace_row
        b = np.zeros(n, dtype=complex)
        b[row] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                lu = sla.lu_factor(A, check_finite=False)
            except sla.LinAlgWarning:
                raise DegenerateSteadyStateError("generator kernel is degenerate (singular LU)") from None
        return sla.lu_solve(lu, b, check_finite=False)

    x = solve(diag_idx[0])
    normL = np.abs(L).sum(axis=1).max()
    if check_unique:
        if n <= 1600:
            sv = sla.svdvals(L)
            if sv[-2] <= 1e-8 * sv[0]:
                raise DegenerateSteadyStateError(
                    f"kernel of the generator is degenerate (s_(n-1) = {sv[-2]:.2e})")
        else:
            x2 = solve(diag_idx[-1])
            if np.abs(x - x2).max() > 1e-8:
                raise DegenerateSteadyStateError("steady state depends on the replaced row")
    resid = np.abs(L @ x).max()
    if resid > 1e-10 * normL:
        raise DegenerateSteadyStateError(f"steady-state residual {resid:.2e} too large")
    rho = unvec(x, d)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def min_eigenvalue(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])


def is_negative(rho: np.ndarray, tol: float = 1e-12) -> bool:
    """Flag states with eigenvalues below -tol (Redfield positivity loss)."""
    return min_eigenvalue(rho) < -tol


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    if rho1.shape != rho2.shape:
        raise ContractViolation("states have different dimensions")
    diff = rho1 - rho2
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.abs(ev).sum())


def distances(recA: SimulationRecord, recB: SimulationRecord) -> np.ndarray:
    if recA.times.shape != recB.times.shape or np.any(recA.times != recB.times):
        raise ContractViolation("records are on different time grids")
    return np.array([trace_distance(a, b) for a, b in zip(recA.states, recB.states)])


def time_averaged_distance(recA: SimulationRecord, recB: SimulationRecord, tau_R: float) -> float:
    """(1/tau_R) int_0^tau_R d(t) dt by the trapezoidal rule."""
    t = recA.times
    if t[0] > 0 or t[-1] < tau_R * (1 - 1e-12):
        raise ContractViolation(f"time grid [{t[0]}, {t[-1]}] does not cover [0, {tau_R}]")
    d = distances(recA, recB)
    mask = t <= tau_R * (1 + 1e-12)
    return float(trapezoid(d[mask], t[mask]) / tau_R)


def gibbs_state(spec: SpectrumDecomposition, beta: float) -> np.ndarray:
    e = spec.energies - spec.energies.min()
    p = np.exp(-beta * e)
    return np.diag(p / p.sum()).astype(complex)


def ground_state(spec: SpectrumDecomposition) -> np.ndarray:
    rho = np.zeros((spec.dim, spec.dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def superposition_state(spec: SpectrumDecomposition) -> np.ndarray:
    """(|g> + |e>)/sqrt(2) with equal real amplitudes."""
    psi = np.zeros(spec.dim, dtype=complex)
    psi[:2] = 1 / np.sqrt(2)
    return np.outer(psi, psi.conj())


INITIAL_STATES = {"ground": ground_state, "superposition": superposition_state}


@dataclass(frozen=True)
class ChainObservables:
    """Site densities n_i rotated into the eigenbasis of a chain Hamiltonian."""

    site_ops: np.ndarray  # (l, d, d)

    @classmethod
    def build(cls, basis, spec: SpectrumDecomposition) -> "ChainObservables":
        occ = basis.occupations().astype(float)
        U = spec.vectors
        ops = np.einsum("ai,ak,al->ikl", occ, U.conj(), U)
        return cls(ops)

    @property
    def l(self) -> int:
        return self.site_ops.shape[0]

    def halves(self):
        """Site index masks (0-based) of the left and right halves.

        Even l: sites 1..l/2 and l/2+1..l. Odd l: the middle site is left out.
        """
        l = self.l
        sites = np.arange(1, l + 1)
        if l % 2 == 0:
            return sites <= l // 2, sites > l // 2
        mid = (l + 1) // 2
        return sites < mid, sites > mid

    def densities(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("ikl,lk->i", self.site_ops, rho).real

    def imbalance_weights(self) -> np.ndarray:
        left, right = self.halves()
        return left.astype(float) - right.astype(float)


def observables(rho: np.ndarray, obs: ChainObservables) -> dict:
    n = obs.densities(rho)
    left, right = obs.halves()
    NL, NR = float(n[left].sum()), float(n[right].sum())
    off = rho - np.diag(np.diag(rho))
    return {
        "n": n,
        "N_L": NL,
        "N_R": NR,
        "delta_N": NL - NR,
        "populations": np.diag(rho).real.copy(),
        "max_coherence": float(np.abs(off).max()) if rho.shape[0] > 1 else 0.0,
    }


def parallel_map(fn, items: Sequence, threads: int = 1) -> list:
    """Ordered map over independent work items (grid cells)."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads, initializer=_single_thread_blas) as ex:
        return list(ex.map(fn, items))


def _single_thread_blas():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"
