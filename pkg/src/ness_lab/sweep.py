"""Deterministic parameter sweeps over epsilon, sparsity and seeds.

Every instance is a pure function of (picture, sigma, seed, epsilon), so
results are collected in any order and written sorted by that tuple.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .model import (
    BathSpec,
    ChainSpec,
    DrivingSpec,
    InvalidParameterError,
    build_perturbation_matrix,
    sample_couplings,
    sigma_from_sparsity,
    unit_lognormal_factors,
)
from .quantum import (
    build_superoperator,
    eigenbasis_analysis,
    quantum_ness_report,
    solve_quantum_ness,
)
from .stochastic import build_rate_matrix, solve_ness, stochastic_report

log = logging.getLogger(__name__)

PICTURES = ("stochastic", "quantum")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def default_epsilon_grid(w_beta: float, sparsities, points: int = 60, decades: float = 3.0) -> np.ndarray:
    """Log grid covering both crossover scales, widened by ``decades`` each side.

    The crossovers are where the ensemble mean eps^2 and the ensemble
    harmonic mean eps^2 * s of the rates reach w_beta.
    """
    s_min = min(sparsities)
    lo = math.sqrt(w_beta) * 10.0**-decades
    hi = math.sqrt(w_beta / s_min) * 10.0**decades
    return np.logspace(math.log10(lo), math.log10(hi), points)


@dataclass(frozen=True)
class SweepConfig:
    n_levels: int = 25
    delta0: float = 1.0
    temperature_b: float = 10.0
    w_beta: float = 0.1
    gamma_phi: float = 0.0
    epsilons: tuple = ()
    sigmas: tuple = (sigma_from_sparsity(1e-5),)
    seeds: tuple = (0, 1, 2, 3, 4)
    pictures: tuple = PICTURES
    flag_epsilons: tuple = (9.3,)
    out: str = "ness-out"
    figures: bool = True

    def __post_init__(self):
        if not self.epsilons:
            sparsities = [math.exp(-s**2) for s in self.sigmas] or [1.0]
            object.__setattr__(self, "epsilons", tuple(float(e) for e in default_epsilon_grid(self.w_beta, sparsities)))
        for name in ("epsilons", "sigmas", "seeds", "pictures"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must be non-empty")
        bad = set(self.pictures) - set(PICTURES)
        if bad:
            raise ConfigError(f"unknown pictures {sorted(bad)}")
        if any(not e > 0 for e in self.epsilons):
            raise ConfigError("epsilon grid must be positive")
        try:
            _ = (self.chain, self.bath)
            for s in self.sigmas:
                DrivingSpec(1.0, s)
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def chain(self) -> ChainSpec:
        return ChainSpec(self.n_levels, self.delta0)

    @property
    def bath(self) -> BathSpec:
        return BathSpec(self.temperature_b, self.w_beta, self.gamma_phi)

    def echo(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def config_from_mapping(data: dict, **overrides) -> SweepConfig:
    """Build a SweepConfig from parsed TOML tables plus CLI overrides."""
    chain = data.get("chain", {})
    bath = data.get("bath", {})
    drv = data.get("driving", {})
    run = data.get("run", {})
    kw = {}
    try:
        if "n_levels" in chain:
            kw["n_levels"] = int(chain["n_levels"])
        if "delta0" in chain:
            kw["delta0"] = float(chain["delta0"])
        for key, name in (("temperature", "temperature_b"), ("w_beta", "w_beta"), ("gamma_phi", "gamma_phi")):
            if key in bath:
                kw[name] = float(bath[key])
        if "sigma" in drv and "sparsity" in drv:
            raise ConfigError("give either driving.sigma or driving.sparsity, not both")
        if "sigma" in drv:
            kw["sigmas"] = tuple(float(s) for s in _as_list(drv["sigma"]))
        elif "sparsity" in drv:
            kw["sigmas"] = tuple(sigma_from_sparsity(float(s)) for s in _as_list(drv["sparsity"]))
        if "seeds" in drv:
            kw["seeds"] = tuple(int(s) for s in _as_list(drv["seeds"]))
        if "epsilon" in drv:
            kw["epsilons"] = tuple(float(e) for e in _as_list(drv["epsilon"]))
            if not kw["epsilons"]:
                raise ConfigError("driving.epsilon must be non-empty")
        elif "epsilon_range" in drv:
            lo, hi = (float(x) for x in drv["epsilon_range"])
            pts = int(drv.get("epsilon_points", 60))
            kw["epsilons"] = tuple(float(e) for e in np.logspace(math.log10(lo), math.log10(hi), pts))
        elif "epsilon_points" in drv:
            w_beta = kw.get("w_beta", SweepConfig.w_beta)
            sig = kw.get("sigmas", SweepConfig.sigmas)
            grid = default_epsilon_grid(w_beta, [math.exp(-s**2) for s in sig], int(drv["epsilon_points"]),
                                        float(drv.get("epsilon_decades", 3.0)))
            kw["epsilons"] = tuple(float(e) for e in grid)
        if "flag_epsilon" in drv:
            kw["flag_epsilons"] = tuple(float(e) for e in _as_list(drv["flag_epsilon"]))
        if "pictures" in run:
            kw["pictures"] = tuple(_as_list(run["pictures"]))
        if "out" in run:
            kw["out"] = str(run["out"])
        if "figures" in run:
            kw["figures"] = bool(run["figures"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config value: {exc}") from None
    seed_base = overrides.pop("seed_base", None)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    if seed_base:
        kw["seeds"] = tuple(seed_base + s for s in kw.get("seeds", SweepConfig.seeds))
    return SweepConfig(**kw)


def load_config(path=None, **overrides) -> SweepConfig:
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_mapping(data, **overrides)


# -- instances -------------------------------------------------------------

NESS_COLUMNS = [
    "picture", "sigma", "sparsity", "seed", "epsilon", "ear", "cooling", "t_sys", "t_sys_unweighted",
    "d_eff", "d_lrt", "d_slrt", "d_bath", "residual",
]


def _instance_key(inst):
    picture, sigma, seed, eps = inst
    return (PICTURES.index(picture), sigma, seed, eps)


def solve_instance(config: SweepConfig, picture: str, sigma: float, seed: int, epsilon: float, detail: bool = False) -> dict:
    """Solve one (picture, sigma, seed, epsilon) point; returns a result record."""
    chain, bath = config.chain, config.bath
    driving = DrivingSpec(epsilon, sigma, seed)
    couplings = sample_couplings(chain, driving)
    t0 = time.perf_counter()
    out = {"picture": picture, "sigma": sigma, "seed": seed, "epsilon": epsilon}
    try:
        if picture == "stochastic":
            ness = solve_ness(build_rate_matrix(chain, bath, couplings))
            report = stochastic_report(ness)
            populations = ness.populations
            out["method"] = "dense-extended"
        elif picture == "quantum":
            v = build_perturbation_matrix(chain, couplings, driving)
            rho = solve_quantum_ness(build_superoperator(chain, bath, v, driving))
            report = quantum_ness_report(chain, bath, v, driving, rho)
            populations = rho.populations
            out["method"] = rho.method
            out["min_eigenvalue"] = rho.min_eigenvalue
            out["hermiticity_error"] = rho.hermiticity_error
            out["trace_error"] = rho.trace_error
            if detail:
                eb = eigenbasis_analysis(chain, v, rho)
                out["eigenbasis"] = {
                    "mean_energies": eb.mean_energies.tolist(),
                    "weights": eb.weights.tolist(),
                    "t_mix": eb.t_mix,
                }
        else:
            raise ValueError(f"unknown picture {picture!r}")
        out["status"] = "ok"
        out["row"] = {"sparsity": driving.sparsity, **report.record()}
        out["residual"] = report.residual
        if detail:
            out["populations"] = populations.tolist()
    except Exception as exc:  # recorded in the manifest, sweep continues
        out["status"] = "failed"
        out["error"] = f"{type(exc).__name__}: {exc}"
    out["seconds"] = time.perf_counter() - t0
    return out


def _solve_packed(args):
    return solve_instance(*args)


def _flagged(config: SweepConfig):
    """Grid epsilons nearest (in log) to each requested snapshot epsilon."""
    grid = np.asarray(config.epsilons)
    picks = set()
    for f in config.flag_epsilons:
        picks.add(float(grid[np.argmin(np.abs(np.log(grid) - math.log(f)))]))
    return picks


def instances(config: SweepConfig):
    items = [(p, s, seed, e) for p in config.pictures for s in config.sigmas for seed in config.seeds for e in config.epsilons]
    return sorted(items, key=_instance_key)


# -- output ----------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def _median(values):
    return float(np.median(values)) if len(values) else math.nan


def crossover_epsilons(config: SweepConfig, sigma: float, seed: int):
    """epsilon at which the sample mean and harmonic mean of w_n equal w_beta."""
    f = unit_lognormal_factors(sigma, seed, config.n_levels - 1)
    mean = float(np.mean(f))
    harm = 1.0 / float(np.mean(1.0 / f))
    return math.sqrt(config.w_beta / mean), math.sqrt(config.w_beta / harm)


@dataclass
class RunManifest:
    config: dict
    version: str
    records: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [r for r in self.records if r["status"] != "ok"]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _aggregate(results, config, column):
    """Per-seed rows plus the median over seeds at each (picture, sigma, epsilon)."""
    groups = {}
    for r in results:
        groups.setdefault((PICTURES.index(r["picture"]), r["sigma"], r["epsilon"]), []).append(r)
    rows = []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda r: r["seed"])
        med = _median([m["row"][column] for m in members])
        for m in members:
            rows.append([m["picture"], m["sigma"], math.exp(-m["sigma"] ** 2), m["epsilon"], m["seed"], m["row"][column], med])
    return rows


def saturation_rows(results, config: SweepConfig):
    """T_inf per (sigma, seed) from the quantum rows, with the eigenbasis bound."""
    chain, bath = config.chain, config.bath
    groups = {}
    for r in results:
        if r["picture"] == "quantum":
            groups.setdefault((r["sigma"], r["seed"]), []).append(r)
    rows = []
    for (sigma, seed) in sorted(groups):
        members = sorted(groups[(sigma, seed)], key=lambda r: r["epsilon"])
        t = [m["row"]["t_sys"] for m in members]
        w = [m["row"]["ear"] for m in members]
        converged = len(t) >= 2 and abs(t[-1] - t[-2]) < 0.01 * abs(t[-1])
        driving = DrivingSpec(1.0, sigma, seed)
        v = build_perturbation_matrix(chain, sample_couplings(chain, driving), driving)
        span = eigenbasis_analysis(chain, v, np.eye(chain.n_levels) / chain.n_levels).spectral_span_r
        bound = math.inf if span <= 0 else chain.energy_window / span * bath.temperature_b
        rows.append([sigma, math.exp(-sigma**2), seed, members[-1]["epsilon"], t[-1], converged, bound, span, w[-1]])
    return rows


TINF_COLUMNS = ["sigma", "sparsity", "seed", "epsilon_max", "t_inf", "converged", "t_inf_lower_bound",
                "spectral_span_r", "ear_inf"]


def run_sweep(config: SweepConfig, out=None, workers: int = 1, progress=None) -> RunManifest:
    """Solve every instance and write the CSV datasets into ``out``."""
    out = Path(out or config.out)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    flagged = _flagged(config)
    jobs = [(config, *inst, inst[3] in flagged) for inst in instances(config)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_packed, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_solve_packed(job))
            if progress:
                progress(i + 1, len(jobs))
    results.sort(key=lambda r: _instance_key((r["picture"], r["sigma"], r["seed"], r["epsilon"])))
    t_solve = time.perf_counter() - t_start

    manifest = RunManifest(config=config.echo(), version=__version__)
    manifest.timings["python"] = platform.python_version()
    for r in results:
        rec = {k: r[k] for k in ("picture", "sigma", "seed", "epsilon", "status", "seconds")}
        for k in ("method", "residual", "min_eigenvalue", "hermiticity_error", "trace_error", "error"):
            if k in r:
                rec[k] = r[k]
        manifest.records.append(rec)
    ok = [r for r in results if r["status"] == "ok"]

    files = {}
    files["ness.csv"] = (NESS_COLUMNS, [[r["picture"], r["sigma"], r["row"]["sparsity"], r["seed"], r["epsilon"],
                                         *[r["row"][c] for c in NESS_COLUMNS[5:]]] for r in ok])
    pop_rows, eig_rows = [], []
    energies = config.chain.energies
    for r in ok:
        if "populations" in r:
            for n, p in enumerate(r["populations"]):
                pop_rows.append([r["picture"], r["sigma"], r["seed"], r["epsilon"], n, energies[n], p])
        if "eigenbasis" in r:
            eb = r["eigenbasis"]
            for k, (e, p) in enumerate(zip(eb["mean_energies"], eb["weights"])):
                eig_rows.append([r["sigma"], r["seed"], r["epsilon"], k, e, p, eb["t_mix"]])
    files["populations.csv"] = (["picture", "sigma", "seed", "epsilon", "n", "energy", "p"], pop_rows)
    files["eigenbasis.csv"] = (["sigma", "seed", "epsilon", "r", "mean_energy", "p_r", "t_mix"], eig_rows)
    agg_cols = ["picture", "sigma", "sparsity", "epsilon", "seed"]
    files["ear_vs_eps.csv"] = (agg_cols + ["ear", "ear_median"], _aggregate(ok, config, "ear"))
    files["tsys_vs_eps.csv"] = (agg_cols + ["t_sys", "t_sys_median"], _aggregate(ok, config, "t_sys"))
    heat = {}
    for r in ok:
        heat.setdefault((PICTURES.index(r["picture"]), r["sigma"], r["epsilon"]), []).append(r["row"]["t_sys"])
    files["tsys_heatmap.csv"] = (["picture", "sigma", "sparsity", "epsilon", "t_sys_median"],
                                 [[PICTURES[k[0]], k[1], math.exp(-k[1] ** 2), k[2], _median(v)] for k, v in sorted(heat.items())])
    d_b = config.bath.bath_diffusion(config.chain)
    cross = []
    for s in config.sigmas:
        for seed in config.seeds:
            e_lrt, e_slrt = crossover_epsilons(config, s, seed)
            cross.append([s, math.exp(-s**2), seed, e_lrt, e_slrt, d_b / config.temperature_b])
    files["crossovers.csv"] = (["sigma", "sparsity", "seed", "eps_lrt", "eps_slrt", "ear_bath_limit"], cross)
    files["tinf_vs_sigma.csv"] = (TINF_COLUMNS, saturation_rows(ok, config))

    for name, (header, rows) in files.items():
        _write_csv(out / name, header, rows)
        manifest.files.append(name)
    manifest.timings["solve_seconds"] = t_solve
    manifest.timings["total_seconds"] = time.perf_counter() - t_start
    manifest.timings["workers"] = workers
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    for f in manifest.failures:
        log.warning("instance failed: %s", f)
    return manifest


def default_workers() -> int:
    return os.cpu_count() or 1
