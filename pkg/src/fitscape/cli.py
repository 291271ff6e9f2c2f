"""Command-line surface.

Subcommands: simulate, fig1, fig2, adjudicate, coupling-check, bas,
pure-birth, mutant-growth, meanfield, theory.  Every file-writing command
drops a manifest.json next to its outputs; re-running with the same flags
reproduces the data files byte for byte.

Exit codes: 0 success, 1 property violation (coupling check), 2 usage
error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, experiments, stats, theory
from .core import Params

_F17 = ".17g"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, _F17)
    return str(x)


def _prob_closed(s: str) -> float:
    v = float(s)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"probability in (0, 1] required: {s}")
    return v


def _prob_open(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"probability in (0, 1) required: {s}")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"nonnegative integer required: {s}")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"positive integer required: {s}")
    return v


def _float_list(s: str) -> list[float]:
    try:
        return [float(tok) for tok in s.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"comma-separated floats required: {s}") from exc


def _law_list(s: str) -> list[str]:
    names = [tok.strip() for tok in s.split(",") if tok.strip()]
    for name in names:
        if name not in theory.LAW_FACTORIES:
            known = ",".join(theory.LAW_FACTORIES)
            raise argparse.ArgumentTypeError(f"unknown law {name!r} (known: {known})")
    return names


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_manifest(outdir, command, args, outputs, elapsed_ms, extra=None) -> str:
    manifest = {
        "command": command,
        "params": args,
        "seed": args.get("seed"),
        "replicates": args.get("replicates", 1),
        "version": __version__,
        "outputs": sorted(os.path.relpath(p, outdir) for p in outputs),
        "elapsed_ms": round(elapsed_ms, 3),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _params(args, steps=None) -> Params:
    return Params(p=args.p, r=args.r,
                  steps=args.steps if steps is None else steps,
                  seed=args.seed)


def _suffix(i: int) -> str:
    return "" if i == 0 else f".{i}"


# -- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    params = _params(args)
    fc = theory.critical_fitness(args.p, args.r)
    split = args.fc_override if args.fc_override is not None else fc
    outputs = []
    results = experiments.simulate_trajectories(
        params, args.replicates, args.sample_every, split, args.burn_in)
    for i, (traj, snap) in enumerate(results):
        n, N, S, L, R, minf = traj
        traj_path = os.path.join(out, f"traj{_suffix(i)}.csv")
        _write_csv(traj_path, ["n", "N", "S", "L_fc", "R_fc", "min_fitness"],
                   zip(n.tolist(), N.tolist(), S.tolist(), L.tolist(),
                       R.tolist(), (float(x) for x in minf)))
        sites_path = os.path.join(out, f"sites{_suffix(i)}.csv")
        _, f, c, b = snap
        order = np.argsort(f, kind="stable")
        _write_csv(sites_path, ["fitness", "count", "birth_time"],
                   ((float(f[j]), int(c[j]), int(b[j])) for j in order))
        fcdf_path = os.path.join(out, f"fcdf{_suffix(i)}.csv")
        stats.write_fcdf_csv(fcdf_path, f, fc)
        outputs += [traj_path, sites_path, fcdf_path]
    _write_manifest(out, "simulate", _argdict(args), outputs,
                    (time.perf_counter() - t0) * 1e3,
                    {"critical_fitness": fc, "split_fitness": split})
    return 0


def cmd_fig1(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    params = _params(args)
    results = experiments.simulate_trajectories(params, 1, max(1, args.steps),
                                                0.5, args.burn_in)
    _traj, (_slots, f, c, b) = results[0]
    order = np.argsort(f, kind="stable")
    path = os.path.join(out, "fig1.csv")
    _write_csv(path, ["fitness", "count", "log2_count", "birth_time"],
               ((float(f[j]), int(c[j]), math.log2(int(c[j])), int(b[j]))
                for j in order))
    fc = theory.critical_fitness(args.p, args.r)
    _write_manifest(out, "fig1", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3,
                    {"critical_fitness": fc, "reference_counts": [64, 256]})
    return 0


def cmd_fig2(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    params = _params(args)
    pooled = experiments.pooled_model_histogram(
        params, args.replicates, (0.0, 1.0))
    laws = [theory.LAW_FACTORIES[name](args.p, args.r) for name in args.laws]
    path = os.path.join(out, "fig2.csv")
    stats.write_hist_csv(path, pooled, laws, args.k_max)
    _write_manifest(out, "fig2", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3)
    return 0


def cmd_adjudicate(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    params = _params(args)
    report = experiments.adjudicate(params, args.replicates, args.k_max,
                                    args.laws)
    path = os.path.join(out, "adjudication.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, "adjudicate", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3)
    print(f"winner: {report['winner']} "
          f"(empirical mean {report['empirical_mean']:.4f}, "
          f"balance mean {report['mass_balance_mean']:.4f})")
    return 0


def cmd_coupling_check(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    if args.grid is not None:
        grid = args.grid
    else:
        grid = np.linspace(0.0, 1.0, args.grid_size).tolist()
    params = Params(p=args.p, r=args.r, steps=0, seed=args.seed)
    report = experiments.coupling_check(grid, args.f, params, args.steps,
                                        args.seeds,
                                        coupled=(args.layout == "coupled"))
    path = os.path.join(out, "coupling.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, "coupling-check", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3)
    if report["ok"]:
        print(f"coupling ordered on {args.seeds} streams x {args.steps} steps")
        return 0
    first = report["violations"][0]
    print(f"coupling violated at seed index {first['seed_index']}, "
          f"step {first['step']}")
    return 1


def cmd_bas(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    params = _params(args)
    pooled = experiments.pooled_bas_histogram(params, args.replicates)
    law = theory.law_bas_geometric(args.p, args.r)
    path = os.path.join(out, "bas_hist.csv")
    stats.write_hist_csv(path, pooled, [law], args.k_max)
    report = stats.law_adjudicate(pooled, [law], args.k_max)
    _write_manifest(out, "bas", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3,
                    {"empirical_mean": report["empirical_mean"],
                     "tv_geometric": report["distances"][0]["tv"],
                     "window_low": pooled.window[0]})
    return 0


def cmd_pure_birth(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    params = Params(p=1.0, r=args.r, steps=args.steps, seed=args.seed)
    pooled = experiments.pooled_model_histogram(params, args.replicates,
                                                (0.0, 1.0))
    law = theory.law_pure_birth(args.r)
    path = os.path.join(out, "purebirth_hist.csv")
    stats.write_hist_csv(path, pooled, [law], args.k_max)
    report = stats.law_adjudicate(pooled, [law], args.k_max)
    _write_manifest(out, "pure-birth", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3,
                    {"empirical_mean": report["empirical_mean"],
                     "tv_pure_birth": report["distances"][0]["tv"]})
    return 0


def cmd_mutant_growth(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    params = _params(args)
    report = experiments.mutant_growth(params, args.birth_step,
                                       args.replicates, args.min_fitness)
    path = os.path.join(out, "focal.csv")
    _write_csv(path, ["n", "mc_mean", "mc_sem", "gamma_ratio",
                      "pow_per_step", "pow_per_birth"],
               ((row["n"], row["mc_mean"], row["mc_sem"], row["gamma_ratio"],
                 row["pow_low"], row["pow_high"]) for row in report["rows"]))
    extra = {k: report[k] for k in
             ("fitted_exponent", "fit_rms_residual", "candidate_exponents",
              "final_mc_mean", "final_oracle_mean", "final_diff_mean",
              "final_diff_sem", "resampled")}
    _write_manifest(out, "mutant-growth", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3, extra)
    return 0


def cmd_meanfield(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    rows = experiments.meanfield_scan(args.r, args.p_grid, args.steps,
                                      args.seed, simulate=args.simulate)
    path = os.path.join(out, "phases.csv")
    _write_csv(path, ["p", "gamma", "phase", "pred_site_exponent",
                      "fitted_site_exponent", "fitted_minfit_slope"],
               ((row["p"], row["gamma"], row["phase"],
                 row["pred_site_exponent"], row["fitted_site_exponent"],
                 row["fitted_minfit_slope"]) for row in rows))
    _write_manifest(out, "meanfield", _argdict(args), [path],
                    (time.perf_counter() - t0) * 1e3)
    return 0


def cmd_theory(args) -> int:
    t0 = time.perf_counter()
    laws = [theory.LAW_FACTORIES[name](args.p, args.r) for name in args.laws]
    ks = np.arange(1, args.k_max, dtype=np.float64)
    cols = [list(law.pmf(ks)) + [law.survival(args.k_max)] for law in laws]
    header = ["k"] + [law.name for law in laws]
    rows = [[i + 1] + [format(col[i], _F17) for col in cols]
            for i in range(args.k_max)]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if args.out is not None:
        out = _outdir(args)
        path = os.path.join(out, "theory.csv")
        _write_csv(path, header, rows)
        _write_manifest(out, "theory", _argdict(args), [path],
                        (time.perf_counter() - t0) * 1e3)
    return 0


def _argdict(args) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fitscape",
        description="Simulator and analysis toolkit for the "
                    "preferential-attachment birth/death population model.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, model=True, replicates=True):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=_nonneg_int, default=0,
                        help="base seed (replicate i uses stream (seed, i))")
        sp.add_argument("--out", default="out", help="output directory")
        if model:
            sp.add_argument("--p", type=_prob_closed, default=0.75,
                            help="birth probability in (0, 1]")
            sp.add_argument("--r", type=_prob_open, default=0.5,
                            help="mutation probability in (0, 1)")
            sp.add_argument("--steps", type=_nonneg_int, default=100_000,
                            help="run horizon")
        if replicates:
            sp.add_argument("--replicates", type=_pos_int, default=1)
        return sp

    sp = add("simulate", cmd_simulate,
             "run the model; write sites.csv and traj.csv")
    sp.add_argument("--sample-every", type=_pos_int, default=100)
    sp.add_argument("--fc-override", type=float, default=None,
                    help="split fitness for the L/R trajectory columns "
                         "(default: the critical fitness)")
    sp.add_argument("--burn-in", type=_nonneg_int, default=0)

    sp = add("fig1", cmd_fig1,
             "per-site population sizes at the final step", replicates=False)
    sp.add_argument("--burn-in", type=_nonneg_int, default=0)

    sp = add("fig2", cmd_fig2,
             "site-size proportions against candidate laws")
    sp.add_argument("--laws", type=_law_list, default=["theorem", "consistent"])
    sp.add_argument("--k-max", type=_pos_int, default=50)

    sp = add("adjudicate", cmd_adjudicate,
             "rank candidate size laws on pooled above-critical sites")
    sp.set_defaults(replicates=8)
    sp.add_argument("--laws", type=_law_list,
                    default=["theorem", "consistent", "geometric"])
    sp.add_argument("--k-max", type=_pos_int, default=50)

    sp = sub.add_parser("coupling-check",
                        help="verify monotone ordering of the coupled family")
    sp.set_defaults(func=cmd_coupling_check)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.add_argument("--out", default="out")
    sp.add_argument("--p", type=_prob_closed, default=0.75)
    sp.add_argument("--r", type=_prob_open, default=0.5)
    sp.add_argument("--f", type=_prob_open, default=0.5,
                    help="split fitness of the family")
    sp.add_argument("--steps", type=_pos_int, default=10_000)
    sp.add_argument("--seeds", type=_pos_int, default=1,
                    help="number of independent streams to check")
    sp.add_argument("--grid", type=_float_list, default=None,
                    help="explicit epsilon grid (comma separated)")
    sp.add_argument("--grid-size", type=_pos_int, default=5,
                    help="evenly spaced grid size when --grid is not given")
    sp.add_argument("--layout", choices=["coupled", "independent"],
                    default="coupled",
                    help="'independent' redraws per epsilon (negative control)")

    sp = add("bas", cmd_bas,
             "uniform-attachment baseline variant; pooled size histogram")
    sp.add_argument("--k-max", type=_pos_int, default=50)

    sp = sub.add_parser("pure-birth",
                        help="p = 1 run against the pure-birth law")
    sp.set_defaults(func=cmd_pure_birth)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.add_argument("--out", default="out")
    sp.add_argument("--r", type=_prob_open, default=0.5)
    sp.add_argument("--steps", type=_nonneg_int, default=100_000)
    sp.add_argument("--replicates", type=_pos_int, default=1)
    sp.add_argument("--k-max", type=_pos_int, default=50)

    sp = add("mutant-growth", cmd_mutant_growth,
             "track focal mutants against growth predictions")
    sp.add_argument("--birth-step", type=_pos_int, default=100)
    sp.add_argument("--min-fitness", type=float, default=None,
                    help="only track mutants strictly above this fitness")

    sp = sub.add_parser("meanfield", help="phase scan over a p grid")
    sp.set_defaults(func=cmd_meanfield)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.add_argument("--out", default="out")
    sp.add_argument("--r", type=_prob_open, default=0.5)
    sp.add_argument("--p-grid", type=_float_list, required=True)
    sp.add_argument("--steps", type=_nonneg_int, default=100_000)
    sp.add_argument("--simulate", action="store_true",
                    help="also fit site-count and leftmost-gap exponents")

    sp = sub.add_parser("theory", help="print law tables (hist.csv columns)")
    sp.set_defaults(func=cmd_theory)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.add_argument("--out", default=None,
                    help="also write theory.csv and a manifest here")
    sp.add_argument("--p", type=_prob_closed, default=0.75)
    sp.add_argument("--r", type=_prob_open, default=0.5)
    sp.add_argument("--laws", type=_law_list,
                    default=["theorem", "consistent", "pure-birth", "geometric"])
    sp.add_argument("--k-max", type=_pos_int, default=50)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"fitscape: I/O error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"fitscape: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
