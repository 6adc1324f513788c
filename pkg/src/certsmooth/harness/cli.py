"""Command-line driver.

Subcommands: synth-data, train-prompts, certify, report, ablate,
oracle-check.  Exit codes: 0 success, 1 configuration error, 2 runtime
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import traceback
from pathlib import Path

from .. import __version__
from ..tensorio import (
    save_dataset,
    save_prompt_state,
    save_vlm,
)
from .ablate import SWEEP_KINDS, ablation_sweep
from .config import ConfigError, RunConfig, load_config
from .curves import certified_accuracy_curve, group_by_sigma, multi_sigma_envelope
from .oracle import run_oracle_check
from .report import FORMAT_EXTENSIONS, emit_report
from .runner import (
    ToyModelBundle,
    load_datasets,
    log,
    read_existing_records,
    run_certification,
)


class CliParser(argparse.ArgumentParser):
    def error(self, message):  # argparse misuse is a configuration error
        raise ConfigError(message)


def build_parser() -> CliParser:
    parser = CliParser(prog="certsmooth", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", type=Path, help="JSON or TOML run config")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--workers", type=int, help="override run.workers")
    parser.add_argument("--out", type=Path, help="override run.out")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth-data", help="generate the synthetic dataset bundles")
    sub.add_parser("train-prompts", help="few-shot-train prompts and save them")
    sub.add_parser("certify", help="run certification over the test set")

    report = sub.add_parser("report", help="curves + envelope from records")
    report.add_argument(
        "--records", type=Path, help="records.jsonl (default <out>/records.jsonl)"
    )
    report.add_argument("--method-name", default=None, help="label for the curves")

    ablate = sub.add_parser("ablate", help="sweep one knob over a grid")
    ablate.add_argument("--kind", required=True, choices=SWEEP_KINDS)
    ablate.add_argument(
        "--grid", default=None, help="comma-separated settings, e.g. 1,2,4,8"
    )

    oracle = sub.add_parser("oracle-check", help="linear-oracle soundness check")
    oracle.add_argument("--samples", type=int, default=200)
    oracle.add_argument("--sigma", type=float, default=0.25)
    oracle.add_argument("--n", type=int, default=10_000)
    oracle.add_argument("--n0", type=int, default=100)
    oracle.add_argument("--alpha", type=float, default=0.001)
    return parser


def resolve_config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers: must be >= 1")
        config = dataclasses.replace(config, workers=args.workers)
    if args.out is not None:
        config = dataclasses.replace(config, out=str(args.out))
    return config


def cmd_synth_data(args) -> int:
    config = resolve_config(args)
    if config.dataset.synth is None:
        raise ConfigError("dataset.synth: required for synth-data")
    test, train, meta = load_datasets(config)
    out = Path(config.out)
    train_manifest = save_dataset(
        out / "train", train, meta["name"] + "_train", meta["classes"], meta["template"]
    )
    test_manifest = save_dataset(
        out / "test", test, meta["name"] + "_test", meta["classes"], meta["template"]
    )
    log("synth_data", train=str(train_manifest), test=str(test_manifest))
    print(train_manifest)
    print(test_manifest)
    return 0


def cmd_train_prompts(args) -> int:
    config = resolve_config(args)
    if config.method.kind not in ("few_shot", "combined"):
        raise ConfigError(
            "method.kind: train-prompts needs few_shot or combined"
        )
    test, train, meta = load_datasets(config)
    bundle = ToyModelBundle(config, train, meta)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    prompts_path = out / "prompts.csmt"
    save_prompt_state(prompts_path, bundle.base_prompts)
    save_vlm(out / "vlm", bundle.vlm)
    trace_path = out / "loss_trace.csv"
    trace_path.write_text(
        "epoch,mean_loss\n"
        + "".join(f"{i},{v!r}\n" for i, v in enumerate(bundle.loss_trace))
    )
    log("prompts_saved", prompts=str(prompts_path), trace=str(trace_path))
    print(prompts_path)
    return 0


def cmd_certify(args) -> int:
    config = resolve_config(args)
    records = run_certification(config)
    print(Path(config.out) / "records.jsonl")
    log("certified", records=len(records))
    return 0


def cmd_report(args) -> int:
    config = resolve_config(args)
    records_path = args.records or Path(config.out) / "records.jsonl"
    records = list(read_existing_records(Path(records_path)).values())
    if not records:
        raise ConfigError(f"no records found at {records_path}")
    records.sort(key=lambda r: (r.sample_index, r.sigma_index))
    name = args.method_name or config.method.kind
    by_sigma = group_by_sigma(records)
    curves = {}
    per_sigma = []
    for sigma, group in sorted(by_sigma.items()):
        curve = certified_accuracy_curve(group, config.report.radius_grid)
        curves[f"{name} sigma={sigma:g}"] = curve
        per_sigma.append(curve)
    curves[f"{name} envelope"] = multi_sigma_envelope(per_sigma)
    out = Path(config.out)
    for fmt in config.report.formats:
        path = emit_report(curves, fmt, out / f"report{FORMAT_EXTENSIONS[fmt]}")
        print(path)
    return 0


def cmd_ablate(args) -> int:
    config = resolve_config(args)
    grid = None
    if args.grid is not None:
        raw = [part.strip() for part in args.grid.split(",") if part.strip()]
        if not raw:
            raise ConfigError("--grid: no settings given")
        grid = raw if args.kind == "context_init" else [int(v) for v in raw]
    ablation_sweep(config, args.kind, grid)
    print(Path(config.out) / args.kind / "summary.csv")
    return 0


def cmd_oracle_check(args) -> int:
    seed = args.seed if args.seed is not None else 0
    result = run_oracle_check(
        samples=args.samples,
        sigma=args.sigma,
        n0=args.n0,
        n=args.n,
        alpha=args.alpha,
        seed=seed,
    )
    print(
        f"samples={result.samples} non_abstain={result.non_abstain} "
        f"label_mismatches={result.label_mismatches} "
        f"radius_overshoots={result.radius_overshoots} "
        f"tight_fraction={result.tight_fraction:.4f}"
    )
    if not result.sound or result.tight_fraction < 0.99:
        log("oracle_check_failed")
        return 2
    return 0


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train-prompts": cmd_train_prompts,
    "certify": cmd_certify,
    "report": cmd_report,
    "ablate": cmd_ablate,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
