"""Command-line entry point: ``coaldet <subcommand> ...``.

Exit codes: 0 success, 2 configuration or domain error, 3 numerical
non-convergence, 4 acceptance failure.  Simulations use ``COALDET_THREADS``
worker threads (default 1); results do not depend on it.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .detcore import (
    NegativeDeterminantError,
    PatternError,
    WallParticlePattern,
    brownian_intensity,
    halfline_intensity,
    warren_cdf,
    warren_matrix,
)
from .gaps import (
    gap_correlation,
    gap_intensity_table,
    joint_gap_mesh,
    rayleigh_gap_density,
    rayleigh_pdf,
    rayleigh_total,
)
from .kernels import KernelDomainError, make_kernel
from .quad import QuadratureError, QuadratureSpec
from .sim import ConfigError, EmptyWindowError, SimulationConfig, SimulationError, simulate
from .sim import compare_histograms, empirical_warren_cdf, lattice_edges, summarize

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4

LATTICE_MODELS = ("ct_simple_walk", "parity_walk")


def fmt(x) -> str:
    """Scientific notation with 12 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.11e}"


def _numbers(obj):
    """Format floats in a JSON-bound structure."""
    if isinstance(obj, dict):
        return {k: _numbers(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_numbers(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_numbers(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer, str)) else fmt(v) for v in row])


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(path: Path, command: str, config: dict, outputs, seed=None) -> None:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (
        _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        if epoch
        else _dt.datetime.now(_dt.timezone.utc)
    )
    manifest = {
        "subcommand": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "timestamp": now.isoformat(timespec="seconds"),
        "outputs": {Path(p).name: _digest(Path(p)) for p in outputs},
    }
    path.write_text(json.dumps(_numbers(manifest), indent=2, sort_keys=True) + "\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integer sites, got {text!r}")
    return [int(v) for v in vals]


def _lattice_kernel(model: str, T: float):
    if model not in LATTICE_MODELS:
        raise ConfigError(f"model must be one of {LATTICE_MODELS}, got {model!r}")
    if model == "parity_walk" and T != int(T):
        raise ConfigError("the parity walk needs an integer number of steps")
    return make_kernel(model, T)


def _out_path(out: str | None, default: str) -> Path:
    path = Path(out or default)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    return path


# -- subcommands --------------------------------------------------------------


def cmd_gap_pmf(args) -> int:
    kernel = _lattice_kernel(args.model, args.T)
    if args.gmax < 1:
        raise ConfigError("gmax must be >= 1")
    table = gap_intensity_table(kernel, args.gmax)
    pmf = table.pmf
    cum = np.cumsum(pmf)
    keep = table.support % kernel.spacing == 0
    rows = [(int(g), m, p, c) for g, m, p, c, k in zip(table.support, table.values, pmf, cum, keep) if k]
    out = _out_path(args.out, "gap_pmf.csv")
    write_csv(out, ["g", "mu", "pmf", "cumulative"], rows)
    k2 = kernel.at(2 * kernel.horizon)
    s = kernel.spacing
    side = out.with_suffix(".json")
    write_json(
        side,
        {
            "model": args.model,
            "T": args.T,
            "gmax": args.gmax,
            "total_intensity": table.normalization,
            "closed_form": f"P_2T(0) + P_2T({s})",
            "closed_form_value": float(k2.pmf(0) + k2.pmf(s)),
            "sum_over_rows": table.total_intensity,
        },
    )
    config = {"model": args.model, "T": args.T, "gmax": args.gmax}
    write_manifest(out.with_suffix(".manifest.json"), "gap-pmf", config, [out, side])
    print(out)
    return EXIT_OK


def cmd_rayleigh(args) -> int:
    if args.gmax <= 0 or args.points < 2:
        raise ConfigError("need gmax > 0 and points >= 2")
    G = np.linspace(args.gmax / args.points, args.gmax, args.points)
    out = _out_path(args.out, "rayleigh.csv")
    write_csv(out, ["G", "intensity", "pdf"], zip(G, rayleigh_gap_density(G), rayleigh_pdf(G)))
    side = out.with_suffix(".json")
    write_json(
        side,
        {
            "total_intensity": rayleigh_total(),
            "mean": math.sqrt(math.pi),
            "variance": 4 - math.pi,
            "total_formula": "1/sqrt(pi)",
            "mean_formula": "sqrt(pi)",
            "variance_formula": "4 - pi",
        },
    )
    write_manifest(
        out.with_suffix(".manifest.json"),
        "rayleigh",
        {"gmax": args.gmax, "points": args.points},
        [out, side],
    )
    print(out)
    return EXIT_OK


def cmd_joint_gap(args) -> int:
    spec = QuadratureSpec(relative_tolerance=args.tol, absolute_tolerance=min(args.tol, 1e-12))
    res = joint_gap_mesh(args.grid_rows, args.gmax, spec)
    out = _out_path(args.out, "joint_gap.dat")
    G1, G2 = res.grid
    with open(out, "w") as fh:
        for i in range(G1.shape[0]):
            if i:
                fh.write("\n")
            for j in range(G1.shape[1]):
                fh.write(f"{fmt(G1[i, j])} {fmt(G2[i, j])} {fmt(res.h_values[i, j])}\n")
    side = out.with_suffix(".json")
    write_json(
        side,
        {
            "rows": args.grid_rows,
            "gmax": args.gmax,
            "tolerance": args.tol,
            "rho": res.correlation_rho,
            "rho_error": res.rho_error,
            "total": res.total,
            "marginal_check": res.marginal_check,
            "max_h_error": float(np.max(res.h_errors)),
        },
    )
    write_manifest(
        out.with_suffix(".manifest.json"),
        "joint-gap",
        {"grid_rows": args.grid_rows, "gmax": args.gmax, "tol": args.tol},
        [out, side],
    )
    print(f"rho {fmt(res.correlation_rho)} +- {fmt(res.rho_error)}")
    return EXIT_OK


def cmd_warren(args) -> int:
    kernel = _lattice_kernel(args.model, args.T)
    starts = _ints(args.starts)
    thresholds = _floats(args.thresholds)
    m = warren_matrix(kernel, starts, thresholds)
    p = warren_cdf(kernel, starts, thresholds)
    result = {"determinant": p, "matrix": m.tolist()}
    if args.mc:
        if args.seed is None:
            raise ConfigError("--mc needs --seed")
        est = empirical_warren_cdf(args.model, starts, thresholds, args.mc, args.seed, args.T)
        result.update(
            {"mc_estimate": est.value, "mc_stderr": est.stderr, "z": est.z(p), "replicates": args.mc}
        )
    print(json.dumps(_numbers(result), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_intensity(args) -> int:
    pat = WallParticlePattern(tuple(_floats(args.walls)), tuple(_floats(args.survivors)))
    value = halfline_intensity(pat, args.T) if args.halfline else brownian_intensity(pat, args.T)
    print(fmt(value))
    return EXIT_OK


def _sim_edges(cfg: SimulationConfig, args):
    if cfg.model.value in LATTICE_MODELS:
        gmax = args.gmax or int(math.ceil(12 * math.sqrt(2 * max(cfg.horizon, 0.5)))) + 2
        return lattice_edges(int(gmax), cfg.site_step)
    gmax = args.gmax or 8 * math.sqrt(max(cfg.horizon, 1e-12))
    width = args.bin_width or gmax / 80
    return np.arange(0.0, gmax + 0.5 * width, width)


def cmd_simulate(args) -> int:
    cfg = SimulationConfig.load(args.config)
    if cfg.explicit_sites is not None:
        raise ConfigError("simulate summarises windowed runs; explicit sites have no window")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    edges = _sim_edges(cfg, args)
    s = summarize(simulate(cfg), edges)
    files = []
    for name, hist in (("gap_histogram.csv", s.gap_histogram()), ("wall_gap_histogram.csv", s.wall_gap_histogram())):
        path = outdir / name
        rows = zip(edges[:-1], edges[1:], hist.counts.astype(int), hist.pmf, hist.stderr)
        write_csv(path, ["left", "right", "count", "pmf", "stderr"], rows)
        files.append(path)
    dens = s.survivor_density()
    summary = {"replicates": s.replicates, "density": dens.value, "density_stderr": dens.stderr}
    try:
        rho = s.gap_correlation()
        summary.update({"rho": rho.value, "rho_stderr": rho.stderr})
    except EmptyWindowError:
        summary.update({"rho": math.nan, "rho_stderr": math.nan})
    cmp = compare_histograms(s)
    summary.update({"wall_vs_survivor_sup": cmp.sup_distance, "wall_vs_survivor_max_z": cmp.max_z})
    path = outdir / "summary.json"
    write_json(path, summary)
    files.append(path)
    write_manifest(outdir / "manifest.json", "simulate", cfg.to_dict(), files, seed=cfg.seed)
    print(json.dumps(_numbers(summary), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_suite

    results = run_suite(args.suite)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coaldet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("gap-pmf", help="discrete gap intensity and pmf table")
    q.add_argument("--model", default="ct_simple_walk", choices=LATTICE_MODELS)
    q.add_argument("--T", type=float, required=True)
    q.add_argument("--gmax", type=int, default=30)
    q.add_argument("--out")
    q.set_defaults(func=cmd_gap_pmf)

    q = sub.add_parser("rayleigh", help="Rayleigh gap density table and constants")
    q.add_argument("--gmax", type=float, default=6.0)
    q.add_argument("--points", type=int, default=120)
    q.add_argument("--out")
    q.set_defaults(func=cmd_rayleigh)

    q = sub.add_parser("joint-gap", help="joint density of adjacent gaps on a mesh")
    q.add_argument("--grid-rows", type=int, default=56)
    q.add_argument("--gmax", type=float, default=2.5)
    q.add_argument("--tol", type=float, default=1e-9)
    q.add_argument("--out")
    q.set_defaults(func=cmd_joint_gap)

    q = sub.add_parser("warren", help="joint CDF of survivor positions")
    q.add_argument("--model", default="parity_walk", choices=LATTICE_MODELS)
    q.add_argument("--T", type=float, required=True)
    q.add_argument("--starts", required=True)
    q.add_argument("--thresholds", required=True)
    q.add_argument("--mc", type=int, default=0, help="Monte Carlo replicates")
    q.add_argument("--seed", type=int)
    q.set_defaults(func=cmd_warren)

    q = sub.add_parser("intensity", help="Brownian wall-particle intensity")
    q.add_argument("--walls", required=True)
    q.add_argument("--survivors", required=True)
    q.add_argument("--T", type=float, default=1.0)
    q.add_argument("--halfline", action="store_true")
    q.set_defaults(func=cmd_intensity)

    q = sub.add_parser("simulate", help="Monte Carlo run from a JSON config")
    q.add_argument("--config", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--gmax", type=float)
    q.add_argument("--bin-width", type=float)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("verify", help="run the acceptance checks")
    q.add_argument("--suite", default="all", choices=["oracle", "montecarlo", "quadrature", "all"])
    q.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QuadratureError, NegativeDeterminantError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, PatternError, KernelDomainError, EmptyWindowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
