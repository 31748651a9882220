"""Command-line entry point: ``semlink run|sweep|pa-bench|oracle``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline, power
from .errors import ConfigError, SemLinkError, StageError

log = logging.getLogger("semlink")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _sim_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", type=Path, help="JSON simulation config")
    p.add_argument("--seed", type=int, help="base seed (overrides config)")
    p.add_argument("--trials", type=int, help="trials per point (overrides config)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--policy", choices=pipeline.POLICIES, action="append",
                   help="power allocation policy; repeat for several in a sweep")
    p.add_argument("--no-impute", action="store_true", help="disable diffusion imputation")
    p.add_argument("--mode", choices=pipeline.MODES, help="localized or propagating losses")
    p.add_argument("--snr", type=float, action="append", help="SNR point in dB (repeatable)")
    p.add_argument("--importance-features", type=Path,
                   help="backbone feature tensor file instead of the synthetic blob")
    p.add_argument("--class-weights", type=Path, help="CSV of class weights (row per class)")
    return p


def build_parser():
    ap = argparse.ArgumentParser(prog="semlink", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _sim_parser(sub, "run", "run trials of one configuration")
    _sim_parser(sub, "sweep", "sweep the SNR list and aggregate")
    for name, text in (("pa-bench", "solve power-allocation instances from CSV"),
                       ("oracle", "brute-force power allocation for small instances")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", "--input", dest="input", type=Path, required=True,
                       help="CSV rows: B, P_ave, D, R_c, g_1..g_B, w_1..w_B")
        p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        if name == "oracle":
            p.add_argument("--grid-step", type=float, default=1e-3)
    return ap


def _load_config(args) -> pipeline.SimConfig:
    cfg = pipeline.SimConfig.from_file(args.config) if args.config else pipeline.SimConfig({})
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.policy:
        changes["policy"] = args.policy[0]
    if args.no_impute:
        changes["impute"] = False
    if args.mode:
        changes["mode"] = args.mode
    if args.snr:
        changes["snr_db"] = args.snr
    if args.importance_features or args.class_weights:
        if not (args.importance_features and args.class_weights):
            raise ConfigError("--importance-features and --class-weights go together")
        changes["importance"] = {"kind": "files", "features": str(args.importance_features),
                                 "class_weights": str(args.class_weights)}
    return cfg.replace(**changes) if changes else cfg


def cmd_run(args):
    cfg = _load_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    snrs = cfg.raw["snr_db"]
    snr = float(snrs[0]) if snrs else None
    results = pipeline.run_trials(cfg, snr)
    pipeline.write_csv(args.out / "trials.csv", pipeline.trial_rows(results), pipeline.TRIAL_COLUMNS)
    pipeline.write_manifest(args.out / "manifest.json", cfg, "run")
    for r in results:
        log.info("trial %d: lost %d/%d, PSNR %.2f dB (%.3fs)", r.trial, r.lost, r.n_packets,
                 r.psnr, r.wall_time)


def cmd_sweep(args):
    cfg = _load_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = pipeline.run_sweep(cfg, args.policy)
    pipeline.write_csv(args.out / "sweep.csv", rows, pipeline.SWEEP_COLUMNS)
    pipeline.write_manifest(args.out / "manifest.json", cfg, "sweep",
                            {"policies": args.policy or [cfg.raw["policy"]]})


def cmd_pa_bench(args):
    problems = power.read_instances(args.input)
    rows = []
    for k, prob in enumerate(problems):
        rows.append((k, "semantic", power.solve_semantic_pa(prob)))
        rows.append((k, "equal", power.evaluate(prob, power.equal_pa(prob.size, prob.p_ave))))
        rows.append((k, "waterfill", power.evaluate(prob, power.waterfill(prob.gains, prob.p_ave))))
    args.out.mkdir(parents=True, exist_ok=True)
    power.write_results(args.out / "pa_bench.csv", rows)


def cmd_oracle(args):
    problems = power.read_instances(args.input)
    rows = [(k, "oracle", power.brute_force_oracle(p, args.grid_step)) for k, p in enumerate(problems)]
    args.out.mkdir(parents=True, exist_ok=True)
    power.write_results(args.out / "oracle.csv", rows)


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "pa-bench": cmd_pa_bench, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        code = EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_RUNTIME
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (SemLinkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
