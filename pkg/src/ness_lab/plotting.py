"""SVG figures rendered from the sweep CSV files.

Each figure function reads only CSV content, so plots can be regenerated
from an output directory without re-solving anything.
"""

import csv
import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib import pyplot as plt  # noqa: E402

log = logging.getLogger(__name__)

COLORS = {"stochastic": "tab:blue", "quantum": "tab:red"}
STYLES = {"stochastic": "-", "quantum": "--"}


class SchemaError(ValueError):
    pass


def apply_mpl_settings():
    plt.rc("font", size=10)
    plt.rc("axes", grid=True)
    plt.rc("grid", linestyle=":", linewidth=0.4, color="0.6")
    plt.rc("xtick", direction="in", top=True)
    plt.rc("ytick", direction="in", right=True)
    plt.rc("svg", hashsalt="ness-lab")


def savefig(fig, path):
    # no date stamp, so identical data gives an identical file
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    log.info("figure written: %s", path)


def read_table(path, required):
    """Rows of a CSV as dicts of floats (strings kept for 'picture')."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{Path(path).name}: missing column '{col}'")
        rows = []
        for raw in reader:
            rows.append({k: (v if k == "picture" else float(v)) for k, v in raw.items()})
    return rows


def _median_curves(rows, value):
    """{(picture, sigma): (eps list, median list)} from per-seed rows."""
    curves = {}
    for r in rows:
        curves.setdefault((r["picture"], r["sigma"]), {})[r["epsilon"]] = r[value]
    return {k: (sorted(v), [v[e] for e in sorted(v)]) for k, v in curves.items()}


def plot_populations(csv_path, out):
    rows = read_table(csv_path, ["picture", "sigma", "seed", "epsilon", "energy", "p"])
    if not rows:
        return None
    eig_path = Path(csv_path).with_name("eigenbasis.csv")
    eig = read_table(eig_path, ["sigma", "seed", "epsilon", "mean_energy", "p_r"]) if eig_path.exists() else []
    first = rows[0]
    key = (first["sigma"], first["seed"], first["epsilon"])
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for picture in ("stochastic", "quantum"):
        sel = [r for r in rows if r["picture"] == picture and (r["sigma"], r["seed"], r["epsilon"]) == key]
        if sel:
            ax.semilogy([r["energy"] for r in sel], [r["p"] for r in sel], "o-", ms=3,
                        color=COLORS[picture], label=f"{picture} $p_n$")
    sel = [r for r in eig if (r["sigma"], r["seed"], r["epsilon"]) == key and r["p_r"] > 0]
    if sel:
        ax.semilogy([r["mean_energy"] for r in sel], [r["p_r"] for r in sel], "x", color="k", label=r"$p_r$ vs $\langle E\rangle_r$")
    ax.set_xlabel("$E$")
    ax.set_ylabel("probability")
    ax.set_title(f"s = {math.exp(-key[0] ** 2):.1e}, $\\epsilon$ = {key[2]:.3g}, seed {int(key[1])}", fontsize=9)
    ax.legend(fontsize=8)
    savefig(fig, out)
    return out


def plot_ear(csv_path, out, crossovers=None, bath_limit=None):
    rows = read_table(csv_path, ["picture", "sigma", "epsilon", "ear_median"])
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for (picture, sigma), (eps, ear) in sorted(_median_curves(rows, "ear_median").items()):
        ax.loglog(eps, ear, STYLES[picture], color=COLORS[picture], label=f"{picture}, s={math.exp(-sigma ** 2):.0e}")
    if crossovers:
        for x in crossovers:
            ax.axvline(x, color="0.4", lw=0.8)
    if bath_limit:
        ax.axhline(bath_limit, color="tab:green", ls=":", lw=1)
    ax.set_xlabel(r"$\epsilon$")
    ax.set_ylabel(r"EAR $\dot{W}$")
    ax.legend(fontsize=8)
    savefig(fig, out)
    return out


def plot_tsys(csv_path, out, temperature_b=None):
    rows = read_table(csv_path, ["picture", "sigma", "epsilon", "t_sys_median"])
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for (picture, sigma), (eps, t) in sorted(_median_curves(rows, "t_sys_median").items()):
        ax.loglog(eps, t, STYLES[picture], color=COLORS[picture], label=f"{picture}, s={math.exp(-sigma ** 2):.0e}")
    if temperature_b:
        ax.axhline(temperature_b, color="tab:green", ls=":", label="$T_B$")
    ax.set_xlabel(r"$\epsilon$")
    ax.set_ylabel(r"$T_{sys}$")
    ax.legend(fontsize=8)
    savefig(fig, out)
    return out


def plot_heatmap(csv_path, out):
    import numpy as np

    rows = read_table(csv_path, ["picture", "sigma", "epsilon", "t_sys_median"])
    if not rows:
        return None
    pictures = [p for p in ("stochastic", "quantum") if any(r["picture"] == p for r in rows)]
    fig, axes = plt.subplots(len(pictures), 1, figsize=(5, 2.6 * len(pictures)), squeeze=False)
    for ax, picture in zip(axes[:, 0], pictures):
        sel = [r for r in rows if r["picture"] == picture]
        sig = sorted({r["sigma"] for r in sel})
        eps = sorted({r["epsilon"] for r in sel})
        grid = np.full((len(sig), len(eps)), np.nan)
        for r in sel:
            grid[sig.index(r["sigma"]), eps.index(r["epsilon"])] = r["t_sys_median"]
        x = np.log10(eps)
        y = np.arange(len(sig))
        mesh = ax.pcolormesh(x, y, grid, shading="nearest", cmap="coolwarm", vmin=10, vmax=50)
        ax.set_yticks(y, [f"{math.exp(-s ** 2):.0e}" for s in sig])
        ax.set_ylabel("s")
        ax.set_title(picture, fontsize=9)
        fig.colorbar(mesh, ax=ax, label=r"$T_{sys}$")
    axes[-1, 0].set_xlabel(r"$\log_{10}\epsilon$")
    fig.tight_layout()
    savefig(fig, out)
    return out


def plot_tinf(csv_path, out):
    rows = read_table(csv_path, ["sigma", "t_inf", "t_inf_lower_bound"])
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.semilogy([r["sigma"] for r in rows], [r["t_inf"] for r in rows], "o", color="tab:blue", label=r"$T_\infty$")
    by_sigma = {}
    for r in rows:
        by_sigma.setdefault(r["sigma"], []).append(r["t_inf_lower_bound"])
    sig = sorted(by_sigma)
    bound = [sorted(by_sigma[s])[len(by_sigma[s]) // 2] for s in sig]
    ax.semilogy(sig, bound, "--", color="tab:red", label=r"$[\Delta(E_n)/\Delta(E_r)]\,T_B$")
    ax.set_xlabel(r"$\sigma$")
    ax.set_ylabel("temperature")
    ax.legend(fontsize=8)
    savefig(fig, out)
    return out


def emit_plots(directory, temperature_b=None):
    """Render every figure whose CSV is present and non-empty; returns written paths."""
    apply_mpl_settings()
    d = Path(directory)
    written = []
    crossovers = bath_limit = None
    cross_path = d / "crossovers.csv"
    if cross_path.exists():
        cross = read_table(cross_path, ["eps_lrt", "eps_slrt", "ear_bath_limit"])
        if cross:
            # markers for the first (sigma, seed) realization
            crossovers = [cross[0]["eps_lrt"], cross[0]["eps_slrt"]]
            bath_limit = cross[0]["ear_bath_limit"]
    if temperature_b is None:
        manifest = d / "manifest.json"
        if manifest.exists():
            import json

            temperature_b = json.loads(manifest.read_text()).get("config", {}).get("temperature_b")
    jobs = [
        ("populations.csv", "populations.svg", plot_populations, {}),
        ("ear_vs_eps.csv", "ear_vs_eps.svg", plot_ear, {"crossovers": crossovers, "bath_limit": bath_limit}),
        ("tsys_vs_eps.csv", "tsys_vs_eps.svg", plot_tsys, {"temperature_b": temperature_b}),
        ("tsys_heatmap.csv", "tsys_heatmap.svg", plot_heatmap, {}),
        ("tinf_vs_sigma.csv", "tinf_vs_sigma.svg", plot_tinf, {}),
    ]
    for src, dst, fn, kw in jobs:
        if not (d / src).exists():
            continue
        if fn(d / src, d / dst, **kw):
            written.append(d / dst)
    if not written:
        log.warning("no data to plot in %s", d)
    return written
