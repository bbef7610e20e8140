"""Steady-state cuts through the local-bath error map (l=5, N=2, V=2J, Ec=17J).

Prints the gamma-scaling exponents at T=5.43J, the temperature cut at
gamma=0.19 and the T=20J row. Usage: python scripts/errormap_cuts.py
"""
import numpy as np

from oqs.config import ErrorMapConfig
from oqs.experiments import errormap_cell


def cell(T, gamma):
    return errormap_cell(ErrorMapConfig(transient=False), (T, gamma))


def main():
    gammas = np.geomspace(0.01, 0.3, 8)
    rows = [cell(5.43, g) for g in gammas]
    d_rwa = np.array([r["d_RWA_ss"] for r in rows])
    d_tr = np.array([r["d_trunc_ss"] for r in rows])
    print("T = 5.43: gamma, d_RWA_ss, d_trunc_ss")
    for g, a, b in zip(gammas, d_rwa, d_tr):
        print(f"  {g:.4f}  {a:.3e}  {b:.3e}")
    print(f"  fit exponent RWA {np.polyfit(np.log(gammas), np.log(d_rwa), 1)[0]:.3f}, "
          f"truncated {np.polyfit(np.log(gammas), np.log(d_tr), 1)[0]:.3f}")

    print("gamma = 0.19: T, d_RWA_ss, d_trunc_ss, w-/w+")
    for T in np.geomspace(0.5, 50, 9):
        r = cell(T, 0.19)
        print(f"  {T:7.3f}  {r['d_RWA_ss']:.3e}  {r['d_trunc_ss']:.3e}  {r['w_ratio']:.3e}")

    print("T = 20: gamma, d_RWA_ss, d_trunc_ss")
    for g in (0.05, 0.1, 0.2, 0.5, 1.0):
        r = cell(20.0, g)
        print(f"  {g:.3f}  {r['d_RWA_ss']:.3e}  {r['d_trunc_ss']:.3e}"
              f"  {'trunc better' if r['d_trunc_ss'] < r['d_RWA_ss'] else 'RWA better'}")


if __name__ == "__main__":
    main()
