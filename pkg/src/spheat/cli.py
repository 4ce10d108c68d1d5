"""Batch command line: ``spheat <subcommand> --config run.json ...``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import harmonics as sh
from .diagnostics import (bound_components, convergence_sweep, isotropy_test,
                          second_moment_error)
from .io import ExperimentConfig, FormatError, fmt, load_eta, save_spectrum, write_path_csv
from .noise_op import NoiseSpec
from .random import sample_isotropic_field
from .solver import simulate_path

THREADS_ENV = "SPHEAT_THREADS"


def _pool_map(func, items, threads: int):
    # results come back in input order whatever the thread count
    if threads <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(func, items))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig, files, extra=None):
    manifest = {"command": command, "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "config": cfg.to_dict(), "files": sorted(str(f) for f in files)}
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg: ExperimentConfig, out: Path, args) -> list:
    scheme = cfg.scheme()

    def run(seed):
        sample = simulate_path(scheme, seed)
        name = out / f"path_seed{seed}.csv"
        write_path_csv(name, sample)
        return name.name

    return _pool_map(run, cfg.seeds, args.threads)


def cmd_convergence(cfg: ExperimentConfig, out: Path, args) -> list:
    scheme = cfg.scheme()
    values = [int(v) for v in args.values.split(",")]
    res = convergence_sweep(scheme, args.axis, values, cfg.seeds, cfg.ref_refine, cfg.L_ref,
                            paths_per_seed=cfg.paths_per_seed, reference=args.reference)
    rows = [r.row() for r in res.reports]
    _write_csv(out / "errors.csv", list(rows[0]),
               [[fmt(v) if isinstance(v, float) else v for v in r.values()] for r in rows])
    summary = {"axis": args.axis, "values": values, "slope": res.slope,
               "intercept": res.intercept, "dominance_constant": res.dominance_constant()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"slope {res.slope:.3f}")
    return ["errors.csv", "summary.json"]


def cmd_isotropy(cfg: ExperimentConfig, out: Path, args) -> list:
    scheme = cfg.scheme()
    if args.eta_file:
        eta = sh.resize(load_eta(args.eta_file), scheme.Lambda)
        scheme = scheme.replace(noise=NoiseSpec(scheme.noise.g, eta))
    res = isotropy_test(scheme, args.time, cfg.seeds, cfg.paths_per_seed, args.z)
    est = res.estimate
    ells, ms = sh.lm_table(scheme.L)
    rows = []
    for a in range(ells.size):
        for b in range(a, ells.size):
            rows.append([ells[a], ms[a], ells[b], ms[b], fmt(est.moments[a, b]), fmt(est.stderr[a, b])])
    _write_csv(out / "moments.csv", ["ell1", "m1", "ell2", "m2", "moment", "stderr"], rows)
    verdict = {"verdict": res.verdict, "max_offdiag_z": res.max_offdiag_z,
               "max_spread_z": res.max_spread_z, "z": res.z, "samples": est.n_samples,
               "time": est.time}
    (out / "isotropy.json").write_text(json.dumps(verdict, indent=2, sort_keys=True) + "\n")
    print(res.verdict)
    return ["moments.csv", "isotropy.json"]


def cmd_second_moment(cfg: ExperimentConfig, out: Path, args) -> list:
    scheme = cfg.scheme()
    sol, err = second_moment_error(scheme, args.time, args.N, args.dt)
    ells, ms = sh.lm_table(sol.N)
    rows = []
    for a in range(ells.size):
        for b in range(a, ells.size):
            rows.append([ells[a], ms[a], ells[b], ms[b], fmt(sol.v[a, b]), fmt(err[a, b])])
    _write_csv(out / "second_moment.csv",
               ["ell1", "m1", "ell2", "m2", "value", "step_error"], rows)
    return ["second_moment.csv"]


def cmd_spectrum_roundtrip(cfg: ExperimentConfig, out: Path, args) -> list:
    """Sample isotropic fields from the spectrum and estimate it back."""
    spec = cfg.load_spectrum()
    save_spectrum(out / "spectrum.csv", spec)
    rng = np.random.default_rng(cfg.seeds[0])
    c = sample_isotropic_field(spec, 0.0, rng, size=args.samples)
    ells, _ = sh.lm_table(spec.ell_max)
    rows = []
    for ell in range(spec.ell_max + 1):
        x = c[:, ells == ell].ravel() ** 2
        rows.append([ell, fmt(spec.a[ell]), fmt(x.mean()), fmt(x.std(ddof=1) / np.sqrt(x.size))])
    _write_csv(out / "spectrum_estimate.csv", ["ell", "A", "A_hat", "stderr"], rows)
    return ["spectrum.csv", "spectrum_estimate.csv"]


COMMANDS = {
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "isotropy": cmd_isotropy,
    "second-moment": cmd_second_moment,
    "spectrum-roundtrip": cmd_spectrum_roundtrip,
}


def run_experiment(cfg: ExperimentConfig, command: str, args) -> int:
    """Run one subcommand and write its artifacts plus ``manifest.json``."""
    out = Path(args.out or cfg.resolve(cfg.out))
    out.mkdir(parents=True, exist_ok=True)
    files = COMMANDS[command](cfg, out, args)
    _write_manifest(out, command, cfg, files)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults otherwise)")
    seeds = common.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="run a single seed")
    seeds.add_argument("--seeds", help="seed count N (seeds 0..N-1) or a comma list")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=int(os.getenv(THREADS_ENV, "1")),
                        help=f"worker threads (default: env {THREADS_ENV} or 1)")
    common.add_argument("--alloc", help="step allocation, uniform:n or sqrtA:N[,delta]")
    common.add_argument("--L", type=int, help="spatial truncation degree")
    common.add_argument("--Lambda", type=int, help="noise truncation degree")
    common.add_argument("--g", help="noise function: identity | constant:b | affine:a,b")
    common.add_argument("--paths", type=int, help="paths per seed")

    p = argparse.ArgumentParser(prog="spheat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write one path CSV per seed")
    c = sub.add_parser("convergence", parents=[common], help="error sweep and slope fit")
    c.add_argument("--axis", choices=["L", "n", "Lambda"], required=True)
    c.add_argument("--values", required=True, help="comma-separated ascending values")
    c.add_argument("--reference", choices=["coupled", "exact"], default="coupled")
    i = sub.add_parser("isotropy", parents=[common], help="second-moment isotropy verdict")
    i.add_argument("--eta-file", help="ell,m,eta CSV overriding the config multipliers")
    i.add_argument("--time", type=float, default=1.0)
    i.add_argument("--z", type=float, default=4.0)
    s = sub.add_parser("second-moment", parents=[common], help="deterministic moment equation")
    s.add_argument("--N", type=int, help="coefficient truncation (default L)")
    s.add_argument("--time", type=float, default=1.0)
    s.add_argument("--dt", type=float, default=1e-3)
    r = sub.add_parser("spectrum-roundtrip", parents=[common], help="sample and re-estimate A_l")
    r.add_argument("--samples", type=int, default=10000)
    return p


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seeds"] = [args.seed]
    elif args.seeds:
        d["seeds"] = ([int(s) for s in args.seeds.split(",")] if "," in args.seeds
                      else list(range(int(args.seeds))))
    for key, val in (("alloc", args.alloc), ("L", args.L), ("Lambda", args.Lambda),
                     ("g", args.g), ("paths_per_seed", args.paths)):
        if val is not None:
            d[key] = val
    return ExperimentConfig.from_dict(d, cfg.base_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return run_experiment(cfg, args.command, args)
    except (ValueError, FileNotFoundError, FloatingPointError) as exc:
        kind = "format error" if isinstance(exc, FormatError) else "error"
        print(f"spheat: {kind}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
