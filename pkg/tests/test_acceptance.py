"""Acceptance criteria, one test per criterion.

Each test prints (and the session summary repeats) a single line
``criterion N: PASS|FAIL  <measured values>`` at the stated tolerances.
Run standalone with ``python tests/test_acceptance.py``.
"""
import sys
import time

import numpy as np
import pytest

from oqs.bath import ConstantCorrelation, DrudeSpectralDensity, drude_bath, g_inf
from oqs.config import BrownianConfig, ChainModel, OptimCompareConfig, WeightsConfig
from oqs.dissipators import (BathChannel, MasterEquation, decompose, lindblad_super,
                             optimal_params, redfield_superoperator, truncated_generator)
from oqs.evolve import (ChainObservables, gibbs_state, is_negative, min_eigenvalue, observables,
                        steady_state, trace_distance)
from oqs.experiments import run_brownian, run_optim_compare, run_weights
from oqs.models import build_hubbard, diagonalize, number_operator
from oqs.trajectories import TrajectoryConfig, ness_imbalance
from oracles import grid_minimum, minus_weight, quad_G_inf, quad_G_t, redfield_dissipator

pytestmark = pytest.mark.acceptance


def chain(l=5, N=2, T=5.0, gamma=0.1, Ec=17.0, sites=(1,), temps=None):
    H = build_hubbard(l, N, 1.0, 2.0)
    spec = diagonalize(H)
    temps = temps or [T] * len(sites)
    chans = [BathChannel.from_operator(number_operator(i, H.basis), spec, drude_bath(gamma, Ec, t))
             for i, t in zip(sites, temps)]
    return H, spec, chans


def random_hermitian(rng, d):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (X + X.conj().T)


def test_c01_decomposition_identity(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 9))
        S = random_hermitian(rng, d)
        SS = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        lam_sq = float(np.exp(rng.uniform(np.log(0.01), np.log(100))))
        phi = float(rng.uniform(-1.4, 1.4))
        dec = decompose(S, SS, lam_sq, phi)
        L = lindblad_super(np.zeros((d, d)), [dec.A_plus, dec.A_minus], [1.0, -1.0])
        ref = np.zeros((d * d, d * d), dtype=complex)
        for k in range(d * d):
            E = np.zeros((d, d), dtype=complex)
            E[k % d, k // d] = 1.0  # column-major unit
            ref[:, k] = redfield_dissipator(S, SS, E).flatten(order="F")
        worst = max(worst, np.abs(L - ref).max() / np.abs(ref).max())
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 10
    criterion(1, ok, f"max relative deviation {worst:.2e} (tol 1e-12) over 200 instances, {dt:.1f}s")
    assert ok


def test_c02_optimality(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    cell_ok, perturb_ok = 0, 0
    for _ in range(50):
        d = int(rng.integers(2, 7))
        S = random_hermitian(rng, d)
        S /= np.linalg.norm(S)
        # physical convolution S o G with positive rates g
        G = np.exp(rng.normal(size=(d, d))) + 1j * rng.normal(size=(d, d))
        SS = S * G
        lam_sq, phi = optimal_params(S, SS)
        g_lam, g_phi, dlog, dphi = grid_minimum(S, SS)
        cell_ok += abs(np.log(lam_sq) - np.log(g_lam)) <= dlog and abs(phi - g_phi) <= dphi
        wm0, wp0 = minus_weight(S, SS, lam_sq, phi)
        good = True
        for fl, fp in [(1.05, 0), (0.95, 0), (1, 0.05), (1, -0.05)]:
            p = phi + fp * max(abs(phi), 1.0)
            wm, wp = minus_weight(S, SS, lam_sq * fl, p)
            good &= wm >= wm0 * (1 - 1e-12) and wm / wp >= wm0 / wp0 * (1 - 1e-12)
        perturb_ok += good
    dt = time.perf_counter() - t0
    ok = cell_ok == 50 and perturb_ok == 50 and dt < 30
    criterion(2, ok, f"grid agreement {cell_ok}/50, perturbation checks {perturb_ok}/50, {dt:.1f}s")
    assert ok


def test_c03_relative_weight_scaling(criterion):
    t0 = time.perf_counter()
    table = run_weights(WeightsConfig(model=ChainModel(5, 2, 1.0, 2.0), Ec=17.0, gamma=0.1,
                                      beta=tuple(np.geomspace(1e-3, 1e-2, 7))))
    slope = table.summary["loglog_slope"]
    last = table.rows[-1]
    rel = abs(last["ratio"] / last["prediction"] - 1)
    rel_q = abs(last["ratio"] / last["prediction_quarter"] - 1)
    dt = time.perf_counter() - t0
    ok = abs(slope - 2.0) <= 0.05 and rel < 0.05 and dt < 10
    criterion(3, ok, f"log-log slope {slope:.4f} (want 2.00 +- 0.05); at beta=1e-2 exact "
                     f"{last['ratio']:.4e} vs chi^2/2 form {last['prediction']:.4e} "
                     f"(dev {rel:.1%}, want <5%); chi^2/4 form dev {rel_q:.1%}; {dt:.1f}s")
    assert ok


def test_c04_bath_oracle(criterion):
    t0 = time.perf_counter()
    gamma, Ec, beta = 0.1, 17.0, 0.2
    corr = drude_bath(gamma, Ec, 1 / beta)
    worst = 0.0
    for d in (-3.0, -1.0, 0.0, 1.0, 3.0):
        for t in (0.1, 1.0, 5.0, np.inf):
            ref = quad_G_inf(d, gamma, Ec, beta) if np.isinf(t) else quad_G_t(d, gamma, Ec, beta, t)
            worst = max(worst, abs(corr.G(d, t) - ref))
    J = DrudeSpectralDensity(gamma, Ec)
    kms, kms_sum = 0.0, 0.0
    for d in np.linspace(0.25, 6, 24):
        for b in (0.05, 0.3, 2.0):
            kms = max(kms, abs(g_inf(-d, J, b) / (np.exp(b * d) * g_inf(d, J, b)) - 1))
        # exponential-sum real part at the bath above
        kms_sum = max(kms_sum, abs(corr.G(-d).real / (np.exp(beta * d) * corr.G(d).real) - 1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and kms <= 1e-12 and kms_sum <= 1e-12 and dt < 30
    criterion(4, ok, f"max |G - quadrature| {worst:.2e} at 20 points (tol 1e-6), KMS deviation "
                     f"{kms:.2e} closed form / {kms_sum:.2e} exp-sum (tol 1e-12), {dt:.1f}s")
    assert ok


def test_c05_rwa_gibbs(criterion):
    t0 = time.perf_counter()
    H, spec, chans = chain(T=5.0, gamma=0.1)
    rho = steady_state(MasterEquation("rwa", chans, spec))
    dist = trace_distance(rho, gibbs_state(spec, 1 / 5.0))
    dt = time.perf_counter() - t0
    ok = dist < 1e-8 and dt < 5
    criterion(5, ok, f"trace distance to Gibbs {dist:.2e} (tol 1e-8), {dt:.2f}s")
    assert ok


def test_c06_singular_coupling(criterion):
    t0 = time.perf_counter()
    H = build_hubbard(5, 2, 1.0, 2.0)
    spec = diagonalize(H)
    ch = BathChannel.from_operator(number_operator(1, H.basis), spec, ConstantCorrelation(0.35))
    L_red = redfield_superoperator([ch], spec)
    gen = truncated_generator([ch], spec)
    diff = np.abs(gen.liouvillian() - L_red).max()
    wm = gen.decompositions[0].w_minus
    dt = time.perf_counter() - t0
    ok = diff <= 1e-12 and wm <= 1e-24 and dt < 1
    criterion(6, ok, f"max |L_trunc - L_Redfield| {diff:.2e} (tol 1e-12), ||A^-||^2 = {wm:.1e}, {dt:.2f}s")
    assert ok


def test_c07_transient_hierarchy(criterion):
    t0 = time.perf_counter()
    table = run_optim_compare(OptimCompareConfig(model=ChainModel(5, 2, 1.0, 2.0), Ec=17.0,
                                                 T=2.0, gamma=0.2))
    d = table.summary["time_averaged_d"]
    dt = time.perf_counter() - t0
    opt, fixed, rwa = d["truncated_optimal"], d["truncated_fixed"], d["rwa"]
    ok = opt < fixed and opt < rwa and dt < 120
    criterion(7, ok, f"d_avg optimal {opt:.3e} < fixed {fixed:.3e} and < RWA {rwa:.3e}, {dt:.1f}s")
    assert ok


def test_c08_high_temperature(criterion):
    t0 = time.perf_counter()
    H, spec, chans = chain(T=20.0, gamma=0.19)
    red = steady_state(MasterEquation("redfield", chans, spec))
    d_tr = trace_distance(steady_state(MasterEquation("truncated", chans, spec)), red)
    d_rwa = trace_distance(steady_state(MasterEquation("rwa", chans, spec)), red)
    dt = time.perf_counter() - t0
    ok = d_tr < 0.02 and d_tr < d_rwa and dt < 60
    criterion(8, ok, f"d_trunc {d_tr:.3e} (< 0.02) vs d_RWA {d_rwa:.3e}, {dt:.2f}s")
    assert ok


def test_c09_redfield_negativity(criterion):
    t0 = time.perf_counter()
    H, spec, chans = chain(T=0.5, gamma=0.1)
    red = steady_state(MasterEquation("redfield", chans, spec))
    tr = steady_state(MasterEquation("truncated", chans, spec))
    flag = is_negative(red)
    dt = time.perf_counter() - t0
    ok = flag and min_eigenvalue(red) < 0 and min_eigenvalue(tr) >= -1e-12 and dt < 30
    criterion(9, ok, f"Redfield min eig {min_eigenvalue(red):.3e} (flag {flag}), "
                     f"truncated min eig {min_eigenvalue(tr):.3e} (>= -1e-12), {dt:.2f}s")
    assert ok


def test_c10_ness_imbalance(criterion):
    t0 = time.perf_counter()
    l, gamma = 6, 0.2
    H, spec, chans = chain(l=6, N=3, gamma=gamma, sites=(1, 6), temps=[7.0, 13.0])
    obs = ChainObservables.build(H.basis, spec)
    dN = {k: observables(steady_state(MasterEquation(k, chans, spec)), obs)["delta_N"]
          for k in ("rwa", "redfield", "truncated")}
    cfg = TrajectoryConfig(n_traj=2000, seed=2024, t_max=300.0, burn_in=100.0)
    res, _ = ness_imbalance(H, drude_bath(gamma, 17.0, 7.0), drude_bath(gamma, 17.0, 13.0), cfg)
    m, err = res["delta_N"]
    z = (m - dN["truncated"]) / err
    dt = time.perf_counter() - t0
    ok = (abs(dN["rwa"]) < 1e-8 and dN["redfield"] > 0 and dN["truncated"] > 0
          and abs(z) <= 3 and dt < 600)
    criterion(10, ok, f"dN RWA {dN['rwa']:.1e}, Redfield {dN['redfield']:.4e}, truncated "
                      f"{dN['truncated']:.4e}; trajectories {m:.4e} +- {err:.1e} "
                      f"({z:+.2f} sigma, n=2000), {dt:.0f}s")
    assert ok


def test_c11_trajectory_statistics(criterion):
    t0 = time.perf_counter()
    H = build_hubbard(5, 2, 1.0, 2.0)
    bl, br = drude_bath(0.2, 17.0, 7.0), drude_bath(0.2, 17.0, 13.0)
    cfg = TrajectoryConfig(n_traj=16000, seed=11, t_max=40.0, burn_in=25.0)
    res, _ = ness_imbalance(H, bl, br, cfg)
    ns = np.array([250, 1000, 4000, 16000])
    errs = np.array([res.prefix(n)["n_1"][1] for n in ns])
    slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
    small = TrajectoryConfig(n_traj=48, seed=5, t_max=30.0, burn_in=10.0)
    runs = [ness_imbalance(H, bl, br, small, threads=w)[0] for w in (1, 4, 8)]
    same = all(np.array_equal(runs[0].per_trajectory, r.per_trajectory)
               and np.array_equal(runs[0].mean, r.mean) and np.array_equal(runs[0].stderr, r.stderr)
               for r in runs[1:])
    dt = time.perf_counter() - t0
    ok = abs(slope + 0.5) <= 0.1 and same and dt < 900
    criterion(11, ok, f"stderr slope {slope:.3f} (want -0.5 +- 0.1; "
                      f"errors {', '.join(f'{e:.1e}' for e in errs)}), "
                      f"bit-identical across 1/4/8 workers: {same}, {dt:.0f}s")
    assert ok


def test_c12_brownian_limit(criterion):
    t0 = time.perf_counter()
    table = run_brownian(BrownianConfig(M=1.0, Omega=1.0, Ec=100.0, gamma=0.01,
                                        T=(50.0, 75.0, 100.0, 150.0)))
    at50 = table.rows[0]
    phis = np.abs(table.column("phi"))
    rel = table.summary["ratio_rel_extrapolated"]
    dt = time.perf_counter() - t0
    ok = (abs(at50["lambda_ratio"] - 1) <= 0.02 and abs(at50["phi"]) <= 1e-3
          and np.all(np.diff(phis) < 0) and abs(rel - 1) <= 0.05 and dt < 60)
    criterion(12, ok, f"at T=50: lambda_sq/(gamma T) {at50['lambda_ratio']:.4f}, phi {at50['phi']:.1e}; "
                      f"|phi| decreasing {bool(np.all(np.diff(phis) < 0))}; extrapolated Q:P ratio / "
                      f"printed {rel:.4f} (want 1 +- 0.05), {dt:.1f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
