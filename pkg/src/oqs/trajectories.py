"""Monte-Carlo wave-function unraveling of Lindblad generators.

Between jumps a trajectory evolves under H_eff = H - (i/2) sum_a A_a^dag A_a.
When ||psi||^2 falls below a uniform threshold r, a jump A_a is applied with
probability proportional to ||A_a psi||^2 and the state is renormalized.

H_eff is diagonalized once, H_eff = W diag(mu) W^-1, so the drift is an
elementwise phase/decay of the coefficient vector c with psi = W c. Norms and
expectation values become quadratic forms in c. If W is badly conditioned
the drift falls back to dense matrix exponentials.

Random streams: trajectory ``k`` of seed ``s`` draws from
``PCG64(SeedSequence(s, spawn_key=(k,)))``, so results do not depend on how
trajectories are distributed over workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import ContractViolation, NumericalDegeneracyError

COND_LIMIT = 1e8
CHUNK = 32


@dataclass(frozen=True)
class TrajectoryConfig:
    n_traj: int = 1000
    seed: int = 0
    t_max: float = 50.0
    burn_in: float = 25.0
    sample_dt: float = 0.5
    rtol: float = 1e-10  # relative tolerance of the jump-time search

    def __post_init__(self):
        if self.n_traj < 1:
            raise ContractViolation("n_traj must be >= 1")
        if not 0 <= self.burn_in < self.t_max:
            raise ContractViolation("need 0 <= burn_in < t_max")
        if self.sample_dt <= 0:
            raise ContractViolation("sample_dt must be positive")
        if not 0 <= self.seed < 2**64:
            raise ContractViolation("seed must be an unsigned 64-bit integer")

    @property
    def sample_times(self) -> np.ndarray:
        k0 = int(np.ceil(self.burn_in / self.sample_dt - 1e-12))
        k1 = int(np.floor(self.t_max / self.sample_dt + 1e-12))
        return np.arange(k0, k1 + 1) * self.sample_dt


@dataclass
class EstimatorResult:
    names: tuple
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int
    seed: int
    per_trajectory: np.ndarray = field(repr=False, default=None)  # (n_traj, n_obs)
    n_jumps: np.ndarray = field(repr=False, default=None)

    def __getitem__(self, name):
        i = self.names.index(name)
        return float(self.mean[i]), float(self.stderr[i])

    def prefix(self, n: int) -> "EstimatorResult":
        """Estimator over the first ``n`` trajectories."""
        return summarize(self.names, self.per_trajectory[:n], self.seed, self.n_jumps[:n])

    def to_records(self) -> list:
        return [{"observable": k, "mean": float(m), "stderr": float(s),
                 "n_traj": self.n_traj, "seed": self.seed}
                for k, m, s in zip(self.names, self.mean, self.stderr)]


def summarize(names, per_traj: np.ndarray, seed: int, n_jumps=None) -> EstimatorResult:
    n = per_traj.shape[0]
    mean = per_traj.mean(axis=0)
    if n > 1:
        err = per_traj.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        err = np.full_like(mean, np.nan)
    return EstimatorResult(tuple(names), mean, err, n, seed, per_traj, n_jumps)


class _Drift:
    """No-jump evolution in the eigenbasis of H_eff, with a dense fallback."""

    def __init__(self, Heff: np.ndarray, jumps: Sequence[np.ndarray], observables):
        d = Heff.shape[0]
        mu, W = np.linalg.eig(-1j * Heff)
        self.eigen = np.linalg.cond(W) < COND_LIMIT
        if not self.eigen:
            mu, W = np.zeros(d), np.eye(d, dtype=complex)
            self.gen = -1j * Heff
        Winv = np.linalg.inv(W)
        self.mu = mu
        self.W = W
        self.Winv = Winv
        self.gram = W.conj().T @ W
        self.jump_maps = np.array([Winv @ A @ W for A in jumps])
        self.jump_norms = np.array([W.conj().T @ A.conj().T @ A @ W for A in jumps])
        self.obs = np.array([W.conj().T @ O @ W for O in observables])

    def advance(self, c: np.ndarray, taus: np.ndarray) -> np.ndarray:
        """Coefficients at offsets ``taus`` (n_t, d)."""
        taus = np.atleast_1d(taus)
        if self.eigen:
            return c[None, :] * np.exp(np.outer(taus, self.mu))
        out = np.empty((len(taus), c.shape[0]), dtype=complex)
        for k, tau in enumerate(taus):
            out[k] = sla.expm(self.gen * tau) @ c
        return out

    def norms(self, a: np.ndarray) -> np.ndarray:
        return np.einsum("tj,jk,tk->t", a.conj(), self.gram, a).real

    def expectations(self, a: np.ndarray, norms: np.ndarray) -> np.ndarray:
        return np.einsum("tj,ijk,tk->ti", a.conj(), self.obs, a).real / norms[:, None]


def _rng(seed: int, idx: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(idx,))))


def _run_one(drift: _Drift, c0: np.ndarray, cfg: TrajectoryConfig, idx: int,
             record: bool = False):
    """One trajectory. Returns (time-averaged observables, jump count[, samples])."""
    rng = _rng(cfg.seed, idx)
    h = cfg.sample_dt
    acc = np.zeros(drift.obs.shape[0])
    kept = [] if record else None
    n_samples = 0
    n_jumps = 0
    t, c, r = 0.0, c0.copy(), rng.random()
    j = 0  # next grid index
    last = 1.0
    while True:
        grid = np.arange(j, j + CHUNK) * h
        grid = grid[grid <= cfg.t_max * (1 + 1e-14)]
        if grid.size == 0:
            break
        a = drift.advance(c, grid - t)
        nrm = drift.norms(a)
        if np.any(np.diff(np.concatenate([[last], nrm])) > 1e-10 * last):
            raise NumericalDegeneracyError("norm increased during no-jump evolution")
        below = np.nonzero(nrm < r)[0]
        stop = below[0] if below.size else grid.size
        if stop > 0:
            upto = grid[:stop]
            take = upto >= cfg.burn_in - 1e-12 * h
            if np.any(take):
                ex = drift.expectations(a[:stop][take], nrm[:stop][take])
                acc += ex.sum(axis=0)
                n_samples += ex.shape[0]
                if record:
                    kept.extend(zip(upto[take], a[:stop][take] / np.sqrt(nrm[:stop][take, None])))
            last = nrm[stop - 1]
        if not below.size:
            if grid.size < CHUNK:
                break
            j += grid.size
            continue
        lo = grid[stop - 1] - t if stop > 0 else 0.0
        hi = grid[stop] - t
        f = lambda tau: drift.norms(drift.advance(c, tau))[0] - r
        tau = brentq(f, lo, hi, xtol=cfg.rtol * max(hi, 1e-300), rtol=4 * np.finfo(float).eps)
        aj = drift.advance(c, tau)[0]
        w = np.einsum("j,ajk,k->a", aj.conj(), drift.jump_norms, aj).real
        w = np.clip(w, 0.0, None)
        total = w.sum()
        if not total > 0:
            raise NumericalDegeneracyError(f"all jump operators annihilate the state at t={t + tau}")
        ch = min(int(np.searchsorted(np.cumsum(w) / total, rng.random(), side="right")), len(w) - 1)
        c = drift.jump_maps[ch] @ aj
        c = c / np.sqrt(w[ch])
        t += tau
        r = rng.random()
        last = 1.0
        n_jumps += 1
        j = int(np.floor(t / h)) + 1
    mean = acc / n_samples if n_samples else np.full_like(acc, np.nan)
    if record:
        return mean, n_jumps, kept
    return mean, n_jumps


# worker-process state, set once per worker by the pool initializer
_WORKER = {}


def _init_worker(drift, c0, cfg):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"
    _WORKER.update(drift=drift, c0=c0, cfg=cfg)


def _run_batch(indices):
    drift, c0, cfg = _WORKER["drift"], _WORKER["c0"], _WORKER["cfg"]
    return [_run_one(drift, c0, cfg, i) for i in indices]


def _prepare(gen, psi0, observables):
    if len(gen.jumps) == 0:
        raise ContractViolation("unraveling needs at least one jump operator")
    if np.any(np.asarray(gen.rates) < 0):
        raise ContractViolation("negative rates cannot be unraveled")
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.vdot(psi0, psi0).real - 1) > 1e-10:
        raise ContractViolation("initial state must be normalized")
    jumps = [np.sqrt(r) * A for A, r in zip(gen.jumps, gen.rates)]
    Heff = np.array(gen.hamiltonian, dtype=complex)
    for A in jumps:
        Heff = Heff - 0.5j * (A.conj().T @ A)
    drift = _Drift(Heff, jumps, observables)
    return drift, drift.Winv @ psi0


def unravel(gen, psi0: np.ndarray, cfg: TrajectoryConfig, observables: dict,
            threads: int = 1) -> EstimatorResult:
    """Steady-state expectation values from time-averaged MCWF trajectories.

    ``gen`` is a frozen LindbladGenerator, ``observables`` maps names to
    matrices in the same basis. Each trajectory is averaged over the sample
    grid in [burn_in, t_max]; the estimator is the mean over trajectories with
    standard error std/sqrt(n_traj).
    """
    names = tuple(observables)
    drift, c0 = _prepare(gen, psi0, [observables[k] for k in names])
    idx = list(range(cfg.n_traj))
    if threads <= 1:
        out = [_run_one(drift, c0, cfg, i) for i in idx]
    else:
        size = max(1, -(-cfg.n_traj // (4 * threads)))
        batches = [idx[i:i + size] for i in range(0, len(idx), size)]
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                 initargs=(drift, c0, cfg)) as ex:
            out = [res for batch in ex.map(_run_batch, batches) for res in batch]
    per = np.array([o[0] for o in out])
    jumps = np.array([o[1] for o in out])
    return summarize(names, per, cfg.seed, jumps)


def sample_trajectory(gen, psi0: np.ndarray, cfg: TrajectoryConfig, idx: int = 0):
    """Normalized states of trajectory ``idx`` on the sample grid.

    Returns (times, states[n_t, d]) in the basis of ``gen``.
    """
    drift, c0 = _prepare(gen, psi0, [np.eye(len(psi0))])
    _, _, kept = _run_one(drift, c0, cfg, idx, record=True)
    times = np.array([k[0] for k in kept])
    states = np.array([drift.W @ k[1] for k in kept])
    return times, states


def ness_imbalance(hamiltonian, corr_L, corr_R, cfg: TrajectoryConfig, threads: int = 1):
    """Particle imbalance of a chain between a bath on site 1 and one on site l.

    Uses the truncated generator and starts from the ground state of H_S.
    Returns the estimator (observables delta_N and n_1..n_l) and the
    generator, so callers can compare against a direct solve.
    """
    from .dissipators import BathChannel, MasterEquation
    from .evolve import ChainObservables
    from .models import diagonalize, number_operator

    basis = hamiltonian.basis
    spec = diagonalize(hamiltonian)
    chans = [BathChannel.from_operator(number_operator(1, basis), spec, corr_L, "L"),
             BathChannel.from_operator(number_operator(basis.l, basis), spec, corr_R, "R")]
    me = MasterEquation("truncated", chans, spec)
    gen = me.generator(np.inf)
    obs = ChainObservables.build(basis, spec)
    ops = {"delta_N": np.einsum("i,ikl->kl", obs.imbalance_weights(), obs.site_ops)}
    ops.update({f"n_{i + 1}": obs.site_ops[i] for i in range(basis.l)})
    psi0 = np.zeros(spec.dim, dtype=complex)
    psi0[0] = 1.0
    return unravel(gen, psi0, cfg, ops, threads), me
