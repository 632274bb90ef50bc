"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``PASS``/``FAIL`` line (collected again in the
terminal summary) before asserting.
"""

import csv
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ness_lab.model import (
    BathSpec,
    ChainSpec,
    Couplings,
    DrivingSpec,
    build_perturbation_matrix,
    canonical_distribution,
    sample_couplings,
    sigma_from_sparsity,
)
from ness_lab.quantum import (
    block_formula_coherence_diagonal,
    block_formula_lambda,
    build_superoperator,
    saturation_temperature,
    solve_quantum_ness,
)
from ness_lab.stochastic import (
    build_rate_matrix,
    cooling_rate,
    diffusion_coefficient,
    ear,
    effective_temperature,
    evolve,
    solve_ness,
)
from ness_lab.sweep import SweepConfig, default_epsilon_grid, default_workers, run_sweep

pytestmark = pytest.mark.slow

CHAIN = ChainSpec(25, 1.0)
BATH = BathSpec(10.0, 0.1)
SIGMA_SPARSE = sigma_from_sparsity(1e-5)
D_B = BATH.bath_diffusion(CHAIN)
CSV_FILES = ["ness.csv", "populations.csv", "eigenbasis.csv", "ear_vs_eps.csv", "tsys_vs_eps.csv",
             "tsys_heatmap.csv", "crossovers.csv", "tinf_vs_sigma.csv"]


def verdict(number, name, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {name} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def couplings(eps, sigma, seed):
    return sample_couplings(CHAIN, DrivingSpec(eps, sigma, seed))


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def default_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("default-sweep")
    t0 = time.perf_counter()
    manifest = run_sweep(SweepConfig(), out, workers=default_workers())
    return out, manifest, time.perf_counter() - t0


def test_c01_steady_state_balance():
    grid = default_epsilon_grid(BATH.w_beta, [math.exp(-3.39**2)])
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for sigma in (0.0, 1.0, 2.0, 3.39):
        for seed in range(5):
            for eps in grid:
                c = couplings(eps, sigma, seed)
                p = solve_ness(build_rate_matrix(CHAIN, BATH, c)).populations_exact
                w, q = ear(CHAIN, c, p), cooling_rate(CHAIN, BATH, p)
                worst = max(worst, abs(w - q) / abs(w))
                count += 1
    elapsed = time.perf_counter() - t0
    ok = count == 1200 and worst < 1e-10 and elapsed < 10.0
    assert verdict(1, "EAR = cooling", ok, f"{count} instances, max rel diff {worst:.1e}, {elapsed:.1f} s")


def test_c02_equilibrium_limit():
    can = canonical_distribution(CHAIN, BATH.temperature_b)
    worst = {"stochastic": 0.0, "quantum": 0.0}
    for seed in range(5):
        d = DrivingSpec(1e-6, SIGMA_SPARSE, seed)
        c = sample_couplings(CHAIN, d)
        worst["stochastic"] = max(worst["stochastic"], np.abs(solve_ness(build_rate_matrix(CHAIN, BATH, c)).populations - can).max())
        v = build_perturbation_matrix(CHAIN, c, d)
        rho = solve_quantum_ness(build_superoperator(CHAIN, BATH, v, d))
        worst["quantum"] = max(worst["quantum"], np.abs(rho.populations - can).max())
    ok = max(worst.values()) < 1e-6
    assert verdict(2, "equilibrium limit", ok,
                   f"max gap stochastic {worst['stochastic']:.1e}, quantum {worst['quantum']:.1e}")


def test_c03_bath_limited_ear(default_sweep):
    out, _, _ = default_sweep
    st = [r for r in rows(out / "ness.csv") if r["picture"] == "stochastic"]
    eps_max = max(float(r["epsilon"]) for r in st)
    ears = [float(r["ear"]) for r in st if float(r["epsilon"]) == eps_max]
    target = D_B / BATH.temperature_b
    dev = max(abs(w / target - 1) for w in ears)
    ok = dev < 0.01
    assert verdict(3, "bath-limited EAR", ok,
                   f"EAR at eps={eps_max:.3g}: {min(ears):.6f}..{max(ears):.6f} vs {target:.4f}, max dev {dev:.2%}")


def test_c04_temperature_grows_as_intensity():
    grid = default_epsilon_grid(BATH.w_beta, [1e-5])
    top = grid[grid >= grid[-1] / 10]
    slopes = []
    for seed in range(5):
        t = [effective_temperature(CHAIN, BATH, solve_ness(build_rate_matrix(CHAIN, BATH, couplings(e, SIGMA_SPARSE, seed))).populations_exact)
             for e in top]
        slopes.append(np.polyfit(np.log(top), np.log(np.array(t, dtype=float)), 1)[0])
    ok = all(abs(s - 2.0) <= 0.05 for s in slopes)
    assert verdict(4, "T_sys ~ eps^2", ok, "slopes " + ", ".join(f"{s:.4f}" for s in slopes))


def test_c05_diffusion_crossover():
    worst_lrt = worst_slrt = 0.0
    for sigma in (0.0, 1.0, 2.0, SIGMA_SPARSE):
        for seed in range(5):
            c = couplings(1.0, sigma, seed)
            d_eff, d_lrt, _ = diffusion_coefficient(CHAIN, BathSpec(10.0, 1e3 * c.rates.max()), c)
            worst_lrt = max(worst_lrt, abs(d_eff / d_lrt - 1))
            d_eff, _, d_slrt = diffusion_coefficient(CHAIN, BathSpec(10.0, 1e-3 * c.rates.min()), c)
            worst_slrt = max(worst_slrt, abs(d_eff / d_slrt - 1))
    rng = np.random.default_rng(2024)
    ordered = 0
    for i in range(1000):
        c = couplings(10 ** rng.uniform(-3, 3), rng.uniform(0, 4), i)
        d_eff, d_lrt, d_slrt = diffusion_coefficient(CHAIN, BATH, c)
        ordered += d_slrt <= d_eff * (1 + 1e-12) and d_eff <= d_lrt * (1 + 1e-12)
    ok = worst_lrt < 0.01 and worst_slrt < 0.01 and ordered == 1000
    assert verdict(5, "D crossover", ok,
                   f"|D/D_lrt-1| {worst_lrt:.1e}, |D/D_slrt-1| {worst_slrt:.1e}, ordering {ordered}/1000")


def test_c06_semi_linearity():
    chain = CHAIN
    c = couplings(1.0, 2.0, 3)
    base = diffusion_coefficient(chain, BATH, c)[2]
    worst = max(abs(diffusion_coefficient(chain, BATH, c.scaled(k))[2] / (k * base) - 1) for k in (1e-3, 1.0, 1e3))
    small = ChainSpec(3)
    a = Couplings(np.array([1.0, 1e-300]), DrivingSpec(1.0))
    b = Couplings(np.array([1e-300, 1.0]), DrivingSpec(1.0))
    ab = Couplings(a.rates + b.rates, DrivingSpec(1.0))
    d = lambda x: diffusion_coefficient(small, BATH, x)[2]  # noqa: E731
    non_additive = d(ab) > 1e6 * (d(a) + d(b))
    ok = worst <= 4 * np.finfo(float).eps and non_additive
    assert verdict(6, "semi-linearity", ok,
                   f"homogeneity error {worst:.1e}; D(a+b)={d(ab):.3g} vs D(a)+D(b)={d(a) + d(b):.3g}")


def test_c07_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        eps, sigma = 10 ** rng.uniform(-2, 0.5), rng.uniform(0, 3.4)
        w = build_rate_matrix(CHAIN, BATH, couplings(eps, sigma, i))
        p_null = solve_ness(w).populations
        gap = np.sort(np.abs(np.linalg.eigvals(w.w).real))[1]
        dt = 0.05 / np.abs(np.diag(w.w)).max()
        p_t = evolve(w, np.full(25, 1 / 25), 40.0 / gap, dt)
        worst = max(worst, np.abs(p_t - p_null).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 60
    assert verdict(7, "null space vs integration", ok, f"max gap {worst:.1e} over 100 instances, {elapsed:.1f} s")


def test_c08_quantum_structure(default_sweep):
    _, manifest, elapsed = default_sweep
    q = [r for r in manifest.records if r["picture"] == "quantum"]
    solved = [r for r in q if r["status"] == "ok"]
    trace = max(r["trace_error"] for r in solved)
    herm = max(r["hermiticity_error"] for r in solved)
    mineig = min(r["min_eigenvalue"] for r in solved)
    q_time = sum(r["seconds"] for r in q)
    ok = len(solved) == len(q) and trace < 1e-12 and herm < 1e-12 and mineig >= -1e-10 and q_time < 600
    assert verdict(8, "quantum invariants", ok,
                   f"{len(solved)}/{len(q)} solves, trace {trace:.1e}, herm {herm:.1e}, min eig {mineig:.1e}, "
                   f"{q_time:.0f} s quantum")


def test_c09_block_formulas():
    worst = 0.0
    for seed in range(10):
        eps = 10 ** (seed / 4 - 1)
        d = DrivingSpec(eps, 2.5, seed)
        v = build_perturbation_matrix(CHAIN, sample_couplings(CHAIN, d), d)
        s = build_superoperator(CHAIN, BATH, v, d)
        n = CHAIN.n_levels
        nu, mu = np.divmod(s.coherence_index, n)
        scale = np.abs(s.matrix).max()
        diag = np.abs(np.diagonal(s.coherence_block()) - block_formula_coherence_diagonal(CHAIN, BATH, v, eps)[mu, nu]).max()
        lam = block_formula_lambda(v, eps)[:, nu, mu]
        mask = (np.arange(n)[:, None] != nu[None, :]) & (np.arange(n)[:, None] != mu[None, :])
        off = np.abs(s.lambda_block()[mask] - lam[mask]).max()
        worst = max(worst, diag / scale, off / scale)
    ok = worst <= 4 * np.finfo(float).eps
    assert verdict(9, "block formulas", ok, f"max entry error {worst:.1e} relative to max |W|")


def test_c10_dephasing_correspondence():
    worst = 0.0
    for sigma, eps, seed in [(1.0, 0.3, 0), (2.0, 1.0, 1), (SIGMA_SPARSE, 9.3, 2), (SIGMA_SPARSE, 100.0, 3)]:
        d = DrivingSpec(eps, sigma, seed)
        c = sample_couplings(CHAIN, d)
        v = build_perturbation_matrix(CHAIN, c, d)
        bath = BathSpec(10.0, 0.1, 1e4 * eps**2 * np.max(v**2))
        p_q = solve_quantum_ness(build_superoperator(CHAIN, bath, v, d)).populations
        p_s = solve_ness(build_rate_matrix(CHAIN, BATH, c)).populations
        worst = max(worst, np.abs(p_q - p_s).max())
    ok = worst < 1e-4
    assert verdict(10, "dephasing correspondence", ok, f"max population gap {worst:.1e}")


def test_c11_quantum_classical_ordering(default_sweep):
    out, _, _ = default_sweep
    table = {(r["picture"], int(r["seed"]), float(r["epsilon"])): r for r in rows(out / "ness.csv")}
    total = 0
    inversions = []
    for (picture, seed, eps), r in table.items():
        if picture != "quantum":
            continue
        total += 1
        t_q, t_s = float(r["t_sys"]), float(table[("stochastic", seed, eps)]["t_sys"])
        if not t_q < t_s:
            inversions.append((eps, t_q / t_s - 1))
    tinf = rows(out / "tinf_vs_sigma.csv")
    ear_inf = [float(r["ear_inf"]) for r in tinf]
    t_inf = [float(r["t_inf"]) for r in tinf]
    finite = all(math.isfinite(t) and r["converged"] == "1" for t, r in zip(t_inf, tinf))
    # saturation of the EAR: D_B/T_B - D_B/T_inf
    dev = max(abs(w / (D_B / BATH.temperature_b - D_B / t) - 1) for w, t in zip(ear_inf, t_inf))
    ok = not inversions and max(ear_inf) < 0.01 and finite and dev < 0.05
    inv = "none" if not inversions else (
        f"{len(inversions)} (eps <= {max(e for e, _ in inversions):.3g}, "
        f"T_q/T_s-1 <= {max(x for _, x in inversions):.1e})")
    assert verdict(11, "quantum colder than stochastic", ok,
                   f"T_q<T_s on {total - len(inversions)}/{total} points, inversions {inv}; "
                   f"EAR_inf max {max(ear_inf):.5f}; T_inf {min(t_inf):.1f}..{max(t_inf):.1f}; "
                   f"saturation relation dev {dev:.2%}")


def test_c12_saturation_bound():
    below = []
    t_sparse = []
    grid = np.logspace(3, 7, 5)
    for sigma in np.arange(0.5, 3.51, 0.5):
        for seed in range(5):
            d = DrivingSpec(1.0, sigma, seed)
            v = build_perturbation_matrix(CHAIN, sample_couplings(CHAIN, d), d)
            res = saturation_temperature(CHAIN, BATH, v, grid)
            if not res.t_inf_estimate >= res.t_inf_lower_bound:
                below.append((sigma, seed))
            if sigma == 3.5:
                t_sparse.append(res.t_inf_estimate)
    t_med = float(np.median(t_sparse))
    near_bath = abs(t_med / BATH.temperature_b - 1) <= 0.30
    ok = not below and near_bath
    assert verdict(12, "T_inf bound", ok,
                   f"bound holds on {35 - len(below)}/35; median T_inf at sigma=3.5 is {t_med:.1f} "
                   f"({t_med / BATH.temperature_b - 1:+.0%} from T_B)")


def test_c13_reproducibility(default_sweep, tmp_path):
    out, _, _ = default_sweep
    run_sweep(SweepConfig(), tmp_path, workers=default_workers())
    differ = [n for n in CSV_FILES if (out / n).read_bytes() != (tmp_path / n).read_bytes()]
    ok = not differ
    assert verdict(13, "reproducibility", ok, "all CSVs byte-identical" if ok else f"differ: {differ}")
