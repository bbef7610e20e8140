"""Named experiments behind the command line interface.

Each ``run_*`` function takes a parameter dataclass from :mod:`oqs.config`
and returns a :class:`Table` of rows plus a small summary dictionary.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .bath import chi, drude_bath
from .config import (BrownianConfig, ChainModel, ErrorMapConfig, ImbalanceConfig,
                     OptimCompareConfig, WeightsConfig)
from .dissipators import (BathChannel, MasterEquation, build_convolution, decompose,
                          optimal_params, relative_weight_expansion, splitting_variance)
from .evolve import (INITIAL_STATES, ChainObservables, distances, is_negative,
                     observables, parallel_map, propagate, steady_state, time_averaged_distance,
                     trace_distance)
from .models import (build_hubbard, build_oscillator, diagonalize, number_operator,
                     required_fock_levels, to_eigenbasis)
from .trajectories import TrajectoryConfig, ness_imbalance

FULL_MODEL = ChainModel(l=8, N=4, J=1.0, V=2.0)


@dataclass
class Table:
    columns: tuple
    rows: list
    summary: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([r[name] for r in self.rows])


def chain_channels(model: ChainModel, sites, temperatures, gamma: float, Ec: float):
    """Hubbard chain with one Drude bath per listed site (density coupling)."""
    H = build_hubbard(model.l, model.N, model.J, model.V)
    spec = diagonalize(H)
    chans = [BathChannel.from_operator(number_operator(i, H.basis), spec,
                                       drude_bath(gamma, Ec, T), f"n{i}")
             for i, T in zip(sites, temperatures)]
    return H, spec, chans


# --- errormap --------------------------------------------------------------

ERRORMAP_COLUMNS = ("T", "gamma", "d_RWA_ss", "d_trunc_ss", "d_RWA_transient",
                    "d_trunc_transient", "w_ratio", "redfield_negative_flag")


def errormap_cell(cfg: ErrorMapConfig, point) -> dict:
    T, gamma = point
    sites = [1] if cfg.coupling == "local" else list(range(1, cfg.model.l + 1))
    H, spec, chans = chain_channels(cfg.model, sites, [T] * len(sites), gamma, cfg.Ec)
    row = dict.fromkeys(ERRORMAP_COLUMNS, float("nan"))
    row.update(T=T, gamma=gamma)
    red = MasterEquation("redfield", chans, spec)
    rho_red = steady_state(red)
    row["redfield_negative_flag"] = int(is_negative(rho_red))
    key = {"rwa": "RWA", "truncated": "trunc"}
    for m in cfg.methods:
        row[f"d_{key[m]}_ss"] = trace_distance(steady_state(MasterEquation(m, chans, spec)), rho_red)
    ratios = []
    for ch in chans:
        SS = build_convolution(ch, spec).matrix
        dec = decompose(ch.coupling, SS, *optimal_params(ch.coupling, SS))
        ratios.append(dec.w_minus / dec.w_plus)
    row["w_ratio"] = float(max(ratios))
    if cfg.transient:
        tau = cfg.tau_factor / (gamma * cfg.model.J)
        t = np.linspace(0.0, tau, cfg.n_times)
        rho0 = INITIAL_STATES[cfg.initial](spec)
        td = cfg.time_dependent
        rec_red = propagate(MasterEquation("redfield", chans, spec, td), rho0, t)
        for m in cfg.methods:
            rec = propagate(MasterEquation(m, chans, spec, td), rho0, t)
            row[f"d_{key[m]}_transient"] = time_averaged_distance(rec, rec_red, tau)
    return row


def run_errormap(cfg: ErrorMapConfig, threads: int = 1, full: bool = False) -> Table:
    if full:
        warnings.warn("full-resolution error map (l=8, N=4) can take hours", RuntimeWarning,
                      stacklevel=2)
        cfg = replace(cfg, model=FULL_MODEL)
    points = [(T, g) for g in cfg.gamma for T in cfg.T]
    rows = parallel_map(partial(errormap_cell, cfg), points, threads)
    summary = {"l": cfg.model.l, "N": cfg.model.N, "coupling": cfg.coupling,
               "n_cells": len(rows),
               "n_redfield_negative": int(sum(r["redfield_negative_flag"] for r in rows))}
    return Table(ERRORMAP_COLUMNS, rows, summary)


# --- imbalance -------------------------------------------------------------

IMBALANCE_COLUMNS = ("l", "gamma", "method", "delta_N", "stderr")
DIRECT_MAX_L = 7


def _imbalance_direct(cfg: ImbalanceConfig, item):
    l, gamma, method = item
    model = ChainModel(l=l, N=l // 2, J=cfg.J, V=cfg.V)
    H, spec, chans = chain_channels(model, [1, l], [cfg.T_L, cfg.T_R], gamma, cfg.Ec)
    rho = steady_state(MasterEquation(method, chans, spec))
    obs = ChainObservables.build(H.basis, spec)
    return {"l": l, "gamma": gamma, "method": method,
            "delta_N": observables(rho, obs)["delta_N"], "stderr": 0.0}


def run_imbalance(cfg: ImbalanceConfig, seed: int = 0, threads: int = 1) -> Table:
    direct = [(l, g, m) for l in cfg.l for g in cfg.gamma for m in cfg.methods
              if m != "trajectories" and l <= DIRECT_MAX_L]
    rows = parallel_map(partial(_imbalance_direct, cfg), direct, threads)
    skipped = [(l, m) for l in cfg.l for m in cfg.methods if m != "trajectories" and l > DIRECT_MAX_L]
    if "trajectories" in cfg.methods:
        tcfg = TrajectoryConfig(n_traj=cfg.n_traj, seed=seed, t_max=cfg.t_max,
                                burn_in=cfg.burn_in, sample_dt=cfg.sample_dt)
        for l in cfg.l:
            H = build_hubbard(l, l // 2, cfg.J, cfg.V)
            for g in cfg.gamma:
                res, _ = ness_imbalance(H, drude_bath(g, cfg.Ec, cfg.T_L),
                                        drude_bath(g, cfg.Ec, cfg.T_R), tcfg, threads)
                mean, err = res["delta_N"]
                rows.append({"l": l, "gamma": g, "method": "trajectories",
                             "delta_N": mean, "stderr": err})
    summary = {"N": "floor(l/2)", "T_L": cfg.T_L, "T_R": cfg.T_R,
               "skipped_direct": [list(x) for x in skipped]}
    return Table(IMBALANCE_COLUMNS, rows, summary)


# --- optim-compare ---------------------------------------------------------

OPTIM_METHODS = ("redfield", "truncated_optimal", "truncated_fixed", "rwa")


def optim_compare_columns(dim: int) -> tuple:
    cols = ["time"]
    for m in OPTIM_METHODS:
        cols += [f"{m}_p{k}" for k in range(dim)] + [f"{m}_coherence"]
        if m != "redfield":
            cols.append(f"{m}_d")
    return tuple(cols)


def run_optim_compare(cfg: OptimCompareConfig) -> Table:
    H, spec, chans = chain_channels(cfg.model, [1], [cfg.T], cfg.gamma, cfg.Ec)
    t = np.linspace(0.0, cfg.horizon, cfg.n_times)
    rho0 = INITIAL_STATES[cfg.initial](spec)
    gens = {
        "redfield": MasterEquation("redfield", chans, spec, True),
        "truncated_optimal": MasterEquation("truncated", chans, spec, True),
        "truncated_fixed": MasterEquation("truncated", chans, spec, True,
                                          params=(cfg.lambda_sq, cfg.phi)),
        "rwa": MasterEquation("rwa", chans, spec, True),
    }
    recs = {m: propagate(g, rho0, t) for m, g in gens.items()}
    d = {m: distances(recs[m], recs["redfield"]) for m in OPTIM_METHODS[1:]}
    rows = []
    for k, tk in enumerate(t):
        row = {"time": float(tk)}
        for m in OPTIM_METHODS:
            rho = recs[m].states[k]
            row.update({f"{m}_p{q}": float(rho[q, q].real) for q in range(spec.dim)})
            off = rho - np.diag(np.diag(rho))
            row[f"{m}_coherence"] = float(np.abs(off).max())
            if m != "redfield":
                row[f"{m}_d"] = float(d[m][k])
        rows.append(row)
    fixed = gens["truncated_fixed"].generator(np.inf).decompositions[0]
    opt = gens["truncated_optimal"].generator(np.inf).decompositions[0]
    summary = {
        "tau_R": cfg.horizon,
        "time_averaged_d": {m: time_averaged_distance(recs[m], recs["redfield"], cfg.horizon)
                            for m in OPTIM_METHODS[1:]},
        "w_minus_fixed": fixed.w_minus,
        "w_minus_optimal": opt.w_minus,
        "w_ratio_fixed": fixed.w_minus / fixed.w_plus,
        "w_ratio_optimal": opt.w_minus / opt.w_plus,
    }
    return Table(optim_compare_columns(spec.dim), rows, summary)


# --- brownian --------------------------------------------------------------

BROWNIAN_COLUMNS = ("T", "n_max", "lambda_sq", "lambda_ratio", "phi", "chi", "c_Q", "c_P_re",
                    "c_P_im", "ratio_numeric", "ratio_printed", "ratio_rel", "scale_rel")


def brownian_point(cfg: BrownianConfig, T: float) -> dict:
    """Optimal parameters and the Q/P expansion of A^+ for the damped oscillator.

    The bath includes the potential renormalization, which removes the damping
    kernel from h. A^+ is written as c_Q Q + c_P P with the global phase fixed
    so that c_Q is real and positive.
    """
    n_max = required_fock_levels(cfg.Omega, T, cfg.fock_tol)
    osc = build_oscillator(cfg.M, cfg.Omega, n_max)
    spec = diagonalize(osc.hamiltonian)
    corr = drude_bath(cfg.gamma, cfg.Ec, T, renormalized=True)
    ch = BathChannel.from_operator(osc.coupling, spec, corr, "Q", normalize=False)
    SS = build_convolution(ch, spec).matrix
    lam_sq, phi = optimal_params(ch.coupling, SS)
    dec = decompose(ch.coupling, SS, lam_sq, phi)
    Q = to_eigenbasis(osc.Q, spec).matrix
    P = to_eigenbasis(osc.P, spec).matrix
    basis = np.stack([Q.ravel(), P.ravel()], axis=1)
    c, *_ = np.linalg.lstsq(basis, dec.A_plus.ravel(), rcond=None)
    c = c * np.exp(-1j * np.angle(c[0]))
    G = corr.G(np.array([cfg.Omega]))[0]
    chi_eff = -G.imag / (cfg.gamma * cfg.Omega)
    MT = cfg.M * T
    ratio_num = abs(c[0]) / abs(c[1].real)
    ratio_printed = 2 * MT / abs(chi_eff)
    printed_cQ = np.sqrt(cfg.gamma * cfg.Omega / 2) * np.sqrt(4 * MT)
    return {
        "T": T, "n_max": n_max, "lambda_sq": lam_sq, "lambda_ratio": lam_sq / (cfg.gamma * T),
        "phi": phi, "chi": chi_eff, "c_Q": float(c[0].real), "c_P_re": float(c[1].real),
        "c_P_im": float(c[1].imag), "ratio_numeric": ratio_num, "ratio_printed": ratio_printed,
        "ratio_rel": ratio_num / ratio_printed, "scale_rel": float(c[0].real) / printed_cQ,
    }


def extrapolate_inverse_T(T, y, n: int = 3) -> float:
    """Value at 1/T -> 0 from a linear fit in 1/T through the n hottest points."""
    T = np.asarray(T, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = np.argsort(T)[-n:]
    if len(idx) < 2:
        return float(y[idx[-1]])
    slope, icpt = np.polyfit(1.0 / T[idx], y[idx], 1)
    return float(icpt)


def run_brownian(cfg: BrownianConfig, threads: int = 1) -> Table:
    rows = parallel_map(partial(brownian_point, cfg), list(cfg.T), threads)
    T = [r["T"] for r in rows]
    summary = {
        "ratio_rel_extrapolated": extrapolate_inverse_T(T, [r["ratio_rel"] for r in rows]),
        "lambda_ratio_hottest": rows[int(np.argmax(T))]["lambda_ratio"],
        "phi_hottest": rows[int(np.argmax(T))]["phi"],
        "scale_rel_extrapolated": extrapolate_inverse_T(T, [r["scale_rel"] for r in rows]),
        "chi_function_hottest": float(chi(cfg.Ec / max(T))),
    }
    return Table(BROWNIAN_COLUMNS, rows, summary)


# --- weights ---------------------------------------------------------------

WEIGHTS_COLUMNS = ("beta", "w_plus", "w_minus", "ratio", "prediction", "prediction_quarter",
                   "variance")


def run_weights(cfg: WeightsConfig) -> Table:
    rows = []
    for beta in cfg.beta:
        H, spec, (ch,) = chain_channels(cfg.model, [cfg.site], [1.0 / beta], cfg.gamma, cfg.Ec)
        SS = build_convolution(ch, spec).matrix
        dec = decompose(ch.coupling, SS, *optimal_params(ch.coupling, SS))
        V = splitting_variance(ch.coupling, spec)
        rows.append({
            "beta": beta, "w_plus": dec.w_plus, "w_minus": dec.w_minus,
            "ratio": dec.w_minus / dec.w_plus,
            "prediction": relative_weight_expansion(beta, cfg.Ec, V),
            "prediction_quarter": relative_weight_expansion(beta, cfg.Ec, V, chi_coeff=0.25),
            "variance": V,
        })
    b = np.array([r["beta"] for r in rows])
    ratio = np.array([r["ratio"] for r in rows])
    summary = {}
    if len(rows) > 1:
        summary["loglog_slope"] = float(np.polyfit(np.log(b), np.log(ratio), 1)[0])
    return Table(WEIGHTS_COLUMNS, rows, summary)
