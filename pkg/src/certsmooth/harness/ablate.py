"""Ablation sweeps: rerun the pipeline while varying one knob."""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .config import ConfigError, RunConfig
from .curves import certified_accuracy_curve, group_by_sigma, multi_sigma_envelope
from .report import emit_report
from .runner import log, run_certification

SWEEP_KINDS = ("shots", "context_tokens", "optimizer_steps", "context_init")

DEFAULT_GRIDS = {
    "shots": (1, 2, 4, 8, 16),
    "context_tokens": (1, 2, 4, 5, 8, 16),
    "optimizer_steps": (1, 2, 4, 8),
    "context_init": ("random", "template"),
}


def apply_setting(config: RunConfig, kind: str, setting) -> RunConfig:
    """Clone the base config with one swept knob changed."""
    method = config.method
    if kind == "shots":
        few = dataclasses.replace(method.few_shot, shots_per_class=int(setting))
        method = dataclasses.replace(method, few_shot=few)
    elif kind == "context_tokens":
        method = dataclasses.replace(method, context_tokens=int(setting))
    elif kind == "optimizer_steps":
        zero = dataclasses.replace(method.zero_shot, steps=int(setting))
        method = dataclasses.replace(method, zero_shot=zero)
    elif kind == "context_init":
        if setting not in ("random", "template"):
            raise ConfigError(
                f"ablate: context_init setting must be random/template, got {setting!r}"
            )
        method = dataclasses.replace(method, init=str(setting))
    else:
        raise ConfigError(f"ablate: unknown sweep kind {kind!r}")
    return dataclasses.replace(config, method=method)


def _check_grid(config: RunConfig, kind: str, grid) -> None:
    if not grid:
        raise ConfigError("ablate: the sweep grid must be non-empty")
    if kind in ("shots",) and config.method.kind not in ("few_shot", "combined"):
        raise ConfigError(
            f"ablate: a {kind} sweep needs method.kind few_shot/combined"
        )
    if kind == "optimizer_steps" and config.method.kind not in (
        "zero_shot",
        "combined",
    ):
        raise ConfigError(
            "ablate: an optimizer_steps sweep needs method.kind zero_shot/combined"
        )


def ablation_sweep(
    config: RunConfig,
    kind: str,
    grid=None,
    out_dir: str | Path | None = None,
) -> dict[str, list]:
    """Run the full pipeline once per setting; emit curves and a summary.

    Per setting: ``<out>/<kind>/<setting>/records.jsonl`` plus an envelope
    report; a ``summary.csv`` across settings sits at ``<out>/<kind>/``.
    The base seed is shared so settings differ only by the swept knob.
    """
    if kind not in SWEEP_KINDS:
        raise ConfigError(
            f"ablate: kind must be one of {list(SWEEP_KINDS)}, got {kind!r}"
        )
    grid = tuple(grid) if grid is not None else DEFAULT_GRIDS[kind]
    _check_grid(config, kind, grid)
    out = Path(out_dir if out_dir is not None else config.out) / kind
    out.mkdir(parents=True, exist_ok=True)

    envelopes: dict[str, list] = {}
    for setting in grid:
        label = f"{kind}={setting}"
        setting_dir = out / str(setting)
        run_config = dataclasses.replace(
            apply_setting(config, kind, setting), out=str(setting_dir)
        )
        log("ablate_setting", kind=kind, setting=setting)
        records = run_certification(run_config)
        curves = [
            certified_accuracy_curve(group, config.report.radius_grid)
            for _, group in sorted(group_by_sigma(records).items())
        ]
        envelope = multi_sigma_envelope(curves)
        envelopes[label] = envelope
        emit_report({label: envelope}, "csv", setting_dir / "envelope.csv")

    summary_lines = ["kind,setting,radius,certified_acc,clean_acc,sigma_used"]
    for setting in grid:
        label = f"{kind}={setting}"
        for p in envelopes[label]:
            summary_lines.append(
                f"{kind},{setting},{p.radius!r},{p.certified_accuracy!r},"
                f"{p.clean_accuracy!r},{p.sigma_used!r}"
            )
    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n")
    return envelopes
