"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error. Everything
other than requested output goes to standard error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .harness import VARIANT_FLAGS, ConfigError, build_matrix, calibrate_M, compare_variants, run
from .workloads import WORKLOADS

log = logging.getLogger("learned_gc")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--workload", choices=sorted(WORKLOADS),
                        help="override workload.kind")
    common.add_argument("--out", type=Path,
                        help="output directory (default: $LEARNED_GC_OUT or .)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="learned-gc",
                                description="Learned GC scheduling experiments on a simulated heap.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one experiment")
    r.add_argument("--variant", help="override experiment.variant")
    c = sub.add_parser("compare", parents=[common], help="run the variant x workload matrix")
    c.add_argument("--workers", type=int, default=1, help="parallel runs (default 1)")
    sub.add_parser("calibrate", parents=[common], help="print the calibrated threshold M")
    e = sub.add_parser("export-policy", parents=[common],
                       help="run a learning variant and write its Q table")
    e.add_argument("--variant", help="override experiment.variant")
    return p


def _output_dir(args) -> Path:
    out = args.out or Path(os.environ.get("LEARNED_GC_OUT", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _settings(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    if args.workload is not None:
        overrides.append(f'workload.kind="{args.workload}"')
    if getattr(args, "variant", None):
        overrides.append(f'experiment.variant="{args.variant}"')
    if args.config is not None and not args.config.is_file():
        raise ConfigError(f"config file not found: {args.config}")
    return load_config(args.config, overrides)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _stem(config) -> str:
    return f"{config.workload.kind}_{config.variant}_{config.seed}"


def cmd_run(args) -> int:
    cfg = _settings(args).experiment
    out = _output_dir(args)
    result = run(cfg)
    _write(out / f"run_{_stem(cfg)}.csv", result.epochs_csv())
    _write(out / f"run_{_stem(cfg)}.json", result.summary_json())
    print(f"{cfg.workload.kind} {cfg.variant} seed={cfg.seed}: median_reward="
          f"{result.median_reward:.6g} M={result.threshold_M} collections={result.total_collections}")
    return 0


def cmd_compare(args) -> int:
    settings = _settings(args)
    if args.workload is not None:
        settings.workloads = [settings.experiment.workload]
    if args.seed is not None:
        settings.seeds = [args.seed]
    out = _output_dir(args)
    matrix = build_matrix(settings.experiment, settings.workloads, settings.variants,
                          settings.seeds)
    table = compare_variants(matrix, workers=args.workers)
    for (_wl, _v, _s), result in sorted(table.results.items()):
        _write(out / f"run_{_stem(result.config)}.csv", result.epochs_csv())
        _write(out / f"run_{_stem(result.config)}.json", result.summary_json())
    _write(out / "table1.csv", table.to_csv())
    _write(out / "table1_detail.csv", table.detail_csv())
    sys.stdout.write(table.to_csv())
    return 0


def cmd_calibrate(args) -> int:
    cfg = _settings(args).experiment
    m = calibrate_M(cfg.workload, cfg.seed, cfg.duration_ticks, cfg.epoch_ticks,
                    cfg.memory.num_generations)
    print(m)
    return 0


def cmd_export_policy(args) -> int:
    cfg = _settings(args).experiment
    if cfg.variant not in VARIANT_FLAGS:
        raise ConfigError(f"variant {cfg.variant!r} has no Q table; use one of "
                          f"{', '.join(VARIANT_FLAGS)}")
    out = _output_dir(args)
    result = run(cfg)
    _write(out / f"policy_{_stem(cfg)}.csv", result.learner.table.to_csv())
    print(f"{len(result.learner.table)} states, {result.table_bytes} bytes")
    return 0


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "calibrate": cmd_calibrate,
            "export-policy": cmd_export_policy}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are configuration errors
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2

