"""Run configuration: one schema, readable from JSON or TOML.

Top-level sections::

    [run]      seed, workers, out
    [dataset]  manifest = "path"  OR  [dataset.synth] classes, image_dim,
               per_class_train, per_class_test, separation, seed
    [model]    kind = "toy_aligned" | "toy_random" | "toy" | "linear"
               | "external", plus kind-specific fields and tau
    [method]   kind = "no_pl" | "few_shot" | "zero_shot" | "combined",
               init, context_tokens, init_seed, prompts_path,
               [method.few_shot] and [method.zero_shot] hyperparameters
    [noise]    sigmas, n0, n, alpha, batch_size
    [report]   radius_grid, formats

Stage seeds written in the config are offsets: the effective stream seed
always folds in run.seed, so changing run.seed reseeds the whole run.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..promptlearn import DEFAULT_SIGMA_RANGE, FewShotConfig, ZeroShotConfig
from .curves import DEFAULT_RADIUS_GRID

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Schema violation; the message names the offending field path."""


METHOD_KINDS = ("no_pl", "few_shot", "zero_shot", "combined")
MODEL_KINDS = ("toy_aligned", "toy_random", "toy", "linear", "external")
INIT_KINDS = ("random", "template")
REPORT_FORMATS = ("csv", "json", "table")


def _expect(obj: dict, path: str, key: str, kinds, default=None, required=False):
    if key not in obj:
        if required:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = obj[key]
    if kinds is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected a boolean, got {value!r}")
        return value
    if kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
        return value
    if kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
        return float(value)
    if kinds is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key}: expected a string, got {value!r}")
        return value
    if kinds is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}.{key}: expected a list, got {value!r}")
        return value
    if kinds is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}.{key}: expected a table, got {value!r}")
        return value
    raise AssertionError(f"unknown expectation {kinds!r}")


def _expect_choice(obj: dict, path: str, key: str, choices, default=None):
    value = _expect(obj, path, key, str, default=default)
    if value not in choices:
        raise ConfigError(
            f"{path}.{key}: expected one of {list(choices)}, got {value!r}"
        )
    return value


def _float_list(obj: dict, path: str, key: str, default):
    raw = _expect(obj, path, key, list, default=list(default))
    out = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]: expected a number, got {v!r}")
        out.append(float(v))
    if not out:
        raise ConfigError(f"{path}.{key}: must be non-empty")
    return tuple(out)


@dataclass(frozen=True)
class SynthSpec:
    classes: int = 4
    image_dim: int = 64
    per_class_train: int = 32
    per_class_test: int = 125
    separation: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class DatasetConfig:
    manifest: str | None = None
    train_manifest: str | None = None
    synth: SynthSpec | None = None
    max_samples: int | None = None


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "toy_aligned"
    tau: float = 100.0
    path: str | None = None  # toy bundle directory
    weights: str | None = None  # linear
    bias: str | None = None
    command: str | None = None  # external
    embed_dim: int = 16
    token_dim: int = 16
    alignment: float = 0.1
    distractor: float = 0.1
    imbalance: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class MethodConfig:
    kind: str = "no_pl"
    init: str | None = None  # default depends on kind
    context_tokens: int = 5
    per_class_context: bool = False
    init_seed: int = 0
    prompts_path: str | None = None
    few_shot: FewShotConfig = field(default_factory=FewShotConfig)
    zero_shot: ZeroShotConfig = field(default_factory=ZeroShotConfig)

    @property
    def effective_init(self) -> str:
        if self.init is not None:
            return self.init
        # few-shot starts from random context tokens; inference-only
        # methods start from the hand-crafted noisy template
        return "random" if self.kind in ("few_shot", "combined") else "template"


@dataclass(frozen=True)
class NoiseConfig:
    sigmas: tuple[float, ...] = DEFAULT_SIGMA_RANGE
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    batch_size: int = 1_000


@dataclass(frozen=True)
class ReportConfig:
    radius_grid: tuple[float, ...] = DEFAULT_RADIUS_GRID
    formats: tuple[str, ...] = ("csv", "json", "table")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    out: str = "runs/out"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    report: ReportConfig = field(default_factory=ReportConfig)


def _parse_dataset(obj: dict) -> DatasetConfig:
    manifest = _expect(obj, "dataset", "manifest", str)
    train_manifest = _expect(obj, "dataset", "train_manifest", str)
    synth_raw = _expect(obj, "dataset", "synth", dict)
    synth = None
    if synth_raw is not None:
        synth = SynthSpec(
            classes=_expect(synth_raw, "dataset.synth", "classes", int, 4),
            image_dim=_expect(synth_raw, "dataset.synth", "image_dim", int, 64),
            per_class_train=_expect(
                synth_raw, "dataset.synth", "per_class_train", int, 32
            ),
            per_class_test=_expect(
                synth_raw, "dataset.synth", "per_class_test", int, 125
            ),
            separation=_expect(synth_raw, "dataset.synth", "separation", float, 3.0),
            seed=_expect(synth_raw, "dataset.synth", "seed", int, 0),
        )
        if synth.classes < 2:
            raise ConfigError("dataset.synth.classes: must be >= 2")
        if synth.separation <= 0:
            raise ConfigError("dataset.synth.separation: must be > 0")
    if manifest is None and synth is None:
        raise ConfigError("dataset: needs either 'manifest' or a 'synth' table")
    if manifest is not None and synth is not None:
        raise ConfigError("dataset: 'manifest' and 'synth' are mutually exclusive")
    max_samples = _expect(obj, "dataset", "max_samples", int)
    if max_samples is not None and max_samples < 1:
        raise ConfigError("dataset.max_samples: must be >= 1")
    return DatasetConfig(
        manifest=manifest,
        train_manifest=train_manifest,
        synth=synth,
        max_samples=max_samples,
    )


def _parse_model(obj: dict) -> ModelConfig:
    kind = _expect_choice(obj, "model", "kind", MODEL_KINDS, default="toy_aligned")
    tau = _expect(obj, "model", "tau", float, 100.0)
    if tau <= 0:
        raise ConfigError("model.tau: must be > 0")
    cfg = ModelConfig(
        kind=kind,
        tau=tau,
        path=_expect(obj, "model", "path", str),
        weights=_expect(obj, "model", "weights", str),
        bias=_expect(obj, "model", "bias", str),
        command=_expect(obj, "model", "command", str),
        embed_dim=_expect(obj, "model", "embed_dim", int, 16),
        token_dim=_expect(obj, "model", "token_dim", int, 16),
        alignment=_expect(obj, "model", "alignment", float, 0.1),
        distractor=_expect(obj, "model", "distractor", float, 0.1),
        imbalance=_expect(obj, "model", "imbalance", float, 0.2),
        seed=_expect(obj, "model", "seed", int, 0),
    )
    if kind == "toy" and cfg.path is None:
        raise ConfigError("model.path: required when model.kind = 'toy'")
    if kind == "linear" and cfg.weights is None:
        raise ConfigError("model.weights: required when model.kind = 'linear'")
    if kind == "external" and cfg.command is None:
        raise ConfigError("model.command: required when model.kind = 'external'")
    return cfg


def _parse_few_shot(obj: dict) -> FewShotConfig:
    path = "method.few_shot"
    cfg = FewShotConfig(
        shots_per_class=_expect(obj, path, "shots_per_class", int, 16),
        epochs=_expect(obj, path, "epochs", int, 50),
        learning_rate=_expect(obj, path, "learning_rate", float, 0.002),
        batch_size=_expect(obj, path, "batch_size", int, 16),
        t_noise=_expect(obj, path, "t_noise", int, 100),
        sigma_range=_float_list(obj, path, "sigma_range", DEFAULT_SIGMA_RANGE),
        momentum=_expect(obj, path, "momentum", float, 0.0),
        tau=_expect(obj, path, "tau", float, 100.0),
        seed=_expect(obj, path, "seed", int, 0),
    )
    return cfg


def _parse_zero_shot(obj: dict) -> ZeroShotConfig:
    path = "method.zero_shot"
    return ZeroShotConfig(
        t_copies=_expect(obj, path, "t_copies", int, 100),
        steps=_expect(obj, path, "steps", int, 1),
        learning_rate=_expect(obj, path, "learning_rate", float, 0.002),
        sigma_range=_float_list(obj, path, "sigma_range", DEFAULT_SIGMA_RANGE),
        tau=_expect(obj, path, "tau", float, 100.0),
        seed=_expect(obj, path, "seed", int, 0),
    )


def _parse_method(obj: dict) -> MethodConfig:
    kind = _expect_choice(obj, "method", "kind", METHOD_KINDS, default="no_pl")
    init = obj.get("init")
    if init is not None:
        init = _expect_choice(obj, "method", "init", INIT_KINDS)
    context_tokens = _expect(obj, "method", "context_tokens", int, 5)
    if context_tokens < 1:
        raise ConfigError("method.context_tokens: must be >= 1")
    try:
        few_shot = _parse_few_shot(_expect(obj, "method", "few_shot", dict, {}))
        zero_shot = _parse_zero_shot(_expect(obj, "method", "zero_shot", dict, {}))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"method: {exc}") from exc
    return MethodConfig(
        kind=kind,
        init=init,
        context_tokens=context_tokens,
        per_class_context=_expect(obj, "method", "per_class_context", bool, False),
        init_seed=_expect(obj, "method", "init_seed", int, 0),
        prompts_path=_expect(obj, "method", "prompts_path", str),
        few_shot=few_shot,
        zero_shot=zero_shot,
    )


def _parse_noise(obj: dict) -> NoiseConfig:
    sigmas = _float_list(obj, "noise", "sigmas", DEFAULT_SIGMA_RANGE)
    if any(s <= 0 for s in sigmas):
        raise ConfigError("noise.sigmas: every value must be > 0")
    n0 = _expect(obj, "noise", "n0", int, 100)
    n = _expect(obj, "noise", "n", int, 10_000)
    alpha = _expect(obj, "noise", "alpha", float, 0.001)
    batch_size = _expect(obj, "noise", "batch_size", int, 1_000)
    if n0 < 1 or n < 1:
        raise ConfigError("noise.n0/noise.n: sample counts must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("noise.alpha: must lie in (0, 1)")
    if batch_size < 1:
        raise ConfigError("noise.batch_size: must be >= 1")
    return NoiseConfig(sigmas=sigmas, n0=n0, n=n, alpha=alpha, batch_size=batch_size)


def _parse_report(obj: dict) -> ReportConfig:
    grid = _float_list(obj, "report", "radius_grid", DEFAULT_RADIUS_GRID)
    formats_raw = _expect(obj, "report", "formats", list, ["csv", "json", "table"])
    formats = []
    for i, fmt in enumerate(formats_raw):
        if fmt not in REPORT_FORMATS:
            raise ConfigError(
                f"report.formats[{i}]: expected one of {list(REPORT_FORMATS)}, "
                f"got {fmt!r}"
            )
        formats.append(fmt)
    return ReportConfig(radius_grid=grid, formats=tuple(formats))


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a table/object")
    known = {"run", "dataset", "model", "method", "noise", "report"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown top-level section")
    run = _expect(raw, "top level", "run", dict, {})
    workers = _expect(run, "run", "workers", int, 1)
    if workers < 1:
        raise ConfigError("run.workers: must be >= 1")
    config = RunConfig(
        seed=_expect(run, "run", "seed", int, 0),
        workers=workers,
        out=_expect(run, "run", "out", str, "runs/out"),
        dataset=_parse_dataset(_expect(raw, "top level", "dataset", dict, {})),
        model=_parse_model(_expect(raw, "top level", "model", dict, {})),
        method=_parse_method(_expect(raw, "top level", "method", dict, {})),
        noise=_parse_noise(_expect(raw, "top level", "noise", dict, {})),
        report=_parse_report(_expect(raw, "top level", "report", dict, {})),
    )
    if config.dataset.manifest is None and config.dataset.synth is None:
        raise ConfigError("dataset: configuration is required")
    if config.model.kind in ("linear", "external") and config.method.kind != "no_pl":
        raise ConfigError(
            f"method.kind: {config.method.kind!r} needs a toy model; "
            f"{config.model.kind!r} models only support 'no_pl'"
        )
    return config


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON (.json) or TOML (anything else) config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc
    try:
        return parse_config(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
