"""Certification runs: task fan-out, adaptation, streaming records, resume.

One task = one (sample, sigma) pair with seed mix64(run_seed, sample_index,
sigma_index).  Prompt adaptation happens once per task, before any
certification sampling; the adapted prompts stay frozen for all n0 + n
evaluations of that sample, as the smoothing guarantee requires.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from threading import Lock

import numpy as np

from ..promptlearn import FewShotConfig, few_shot_train, zero_shot_adapt
from ..seeds import PHASE_ADAPT, mix64
from ..smoothing import NoiseSpec, certify, derive_task_seed
from ..tensorio import load_dataset, load_prompt_state, load_vlm, read_tensor
from ..toymodel import (
    LinearArgmaxClassifier,
    PromptState,
    SynthDataset,
    ToyVlm,
    make_classifier,
    synth_split,
    take_shots,
)
from .config import ConfigError, RunConfig
from .curves import CertRecord

RECORDS_FILENAME = "records.jsonl"

# config-level stage tags folded into run.seed
_STAGE_FEW_SHOT = 0xF5
_STAGE_INIT = 0x11


class SerializedClassifier:
    """Lock wrapper for classifiers that declare concurrent_safe = False."""

    concurrent_safe = True

    def __init__(self, inner):
        self._inner = inner
        self._lock = Lock()
        self.num_classes = inner.num_classes

    def evaluate(self, batch):
        with self._lock:
            return self._inner.evaluate(batch)

    def close(self):
        closer = getattr(self._inner, "close", None)
        if closer is not None:
            closer()


def log(event: str, **fields) -> None:
    """Line-oriented key=value run log on stderr."""
    parts = [f"event={event}"]
    parts += [f"{k}={v}" for k, v in fields.items()]
    print(" ".join(parts), file=sys.stderr, flush=True)


def load_datasets(config: RunConfig) -> tuple[SynthDataset, SynthDataset | None, dict]:
    """Resolve (test set, train set or None, dataset metadata)."""
    ds = config.dataset
    if ds.synth is not None:
        train, test = synth_split(
            ds.synth.classes,
            ds.synth.image_dim,
            ds.synth.per_class_train,
            ds.synth.per_class_test,
            ds.synth.separation,
            ds.synth.seed,
        )
        meta = {
            "name": f"synth{ds.synth.classes}c",
            "classes": [f"class_{i}" for i in range(ds.synth.classes)],
            "template": "a synthetic cluster image of {}",
        }
        return test, train, meta
    test, meta = load_dataset(ds.manifest)
    train = None
    if ds.train_manifest is not None:
        train, _ = load_dataset(ds.train_manifest)
    return test, train, meta


class ToyModelBundle:
    """Frozen encoders plus the initial (possibly few-shot-tuned) prompts."""

    def __init__(self, config: RunConfig, train: SynthDataset | None, meta: dict):
        model = config.model
        method = config.method
        if model.kind == "toy":
            self.vlm = load_vlm(model.path)
        elif model.kind == "toy_random":
            self.vlm = ToyVlm.random(
                num_classes=len(meta["classes"]),
                image_dim=train.image_dim if train is not None else 64,
                embed_dim=model.embed_dim,
                token_dim=model.token_dim,
                seed=model.seed,
            )
        elif model.kind == "toy_aligned":
            if train is None:
                raise ConfigError(
                    "model.kind: 'toy_aligned' needs class means from a train "
                    "set (dataset.synth or dataset.train_manifest)"
                )
            self.vlm = ToyVlm.aligned(
                train.class_means,
                embed_dim=model.embed_dim,
                context_tokens=method.context_tokens,
                alignment=model.alignment,
                distractor=model.distractor,
                imbalance=model.imbalance,
                seed=model.seed,
            )
        else:
            raise ConfigError(f"model.kind: {model.kind!r} is not a toy model")
        self.tau = model.tau
        self.class_names = tuple(meta["classes"])
        self.template = meta["template"]

        classes = self.vlm.num_classes if method.per_class_context else None
        if method.effective_init == "template":
            self.init_prompts = PromptState.template(
                num_tokens=method.context_tokens,
                token_dim=self.vlm.token_dim,
                num_classes=classes,
            )
        else:
            self.init_prompts = PromptState.random(
                num_tokens=method.context_tokens,
                token_dim=self.vlm.token_dim,
                seed=mix64(config.seed, _STAGE_INIT, method.init_seed),
                num_classes=classes,
            )

        self.base_prompts = self.init_prompts
        self.loss_trace: list[float] = []
        if method.kind in ("few_shot", "combined"):
            if method.prompts_path is not None:
                self.base_prompts = load_prompt_state(method.prompts_path)
            else:
                if train is None:
                    raise ConfigError(
                        "method.kind: few-shot methods need a train set "
                        "(dataset.synth or dataset.train_manifest)"
                    )
                self.base_prompts, self.loss_trace = self.train_few_shot(
                    config, train
                )

    def train_few_shot(self, config: RunConfig, train: SynthDataset):
        raw = config.method.few_shot
        effective = FewShotConfig(
            shots_per_class=raw.shots_per_class,
            epochs=raw.epochs,
            learning_rate=raw.learning_rate,
            batch_size=raw.batch_size,
            t_noise=raw.t_noise,
            sigma_range=raw.sigma_range,
            momentum=raw.momentum,
            tau=raw.tau,
            seed=mix64(config.seed, _STAGE_FEW_SHOT, raw.seed),
        )
        shots = take_shots(train, raw.shots_per_class, seed=effective.seed)
        started = time.perf_counter()
        prompts, trace = few_shot_train(self.vlm, self.init_prompts, shots, effective)
        log(
            "few_shot_trained",
            epochs=raw.epochs,
            shots=raw.shots_per_class,
            final_loss=f"{trace[-1]:.6f}" if trace else "none",
            seconds=f"{time.perf_counter() - started:.2f}",
        )
        return prompts, trace

    def classifier(self, prompts: PromptState):
        return make_classifier(
            self.vlm, prompts, self.tau, self.class_names, self.template
        )


def read_existing_records(path: Path) -> dict[tuple[int, int], CertRecord]:
    records: dict[tuple[int, int], CertRecord] = {}
    if not path.exists():
        return records
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            record = CertRecord.from_json(line)
            records[(record.sample_index, record.sigma_index)] = record
    return records


def write_sorted_records(path: Path, records: list[CertRecord]) -> None:
    ordered = sorted(records, key=lambda r: (r.sample_index, r.sigma_index))
    path.write_text("".join(r.to_json() + "\n" for r in ordered))


def run_certification(
    config: RunConfig, out_dir: str | Path | None = None
) -> list[CertRecord]:
    """Certify every (sample, sigma) pair of the configured run.

    Records stream to ``<out>/records.jsonl`` as they are produced and the
    file is rewritten in canonical (sample, sigma) order at the end, so an
    interrupted run resumes by skipping completed keys.
    """
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / RECORDS_FILENAME

    test, train, meta = load_datasets(config)
    images = test.images
    labels = test.labels
    if config.dataset.max_samples is not None:
        images = images[: config.dataset.max_samples]
        labels = labels[: config.dataset.max_samples]

    method_kind = config.method.kind
    model_kind = config.model.kind
    zero_cfg = config.method.zero_shot

    bundle = None
    shared_classifier = None
    if model_kind in ("toy", "toy_random", "toy_aligned"):
        bundle = ToyModelBundle(config, train, meta)
        if method_kind in ("no_pl", "few_shot"):
            shared_classifier = bundle.classifier(bundle.base_prompts)
    elif model_kind == "linear":
        weights = read_tensor(config.model.weights).astype(np.float64)
        bias = (
            read_tensor(config.model.bias).astype(np.float64)
            if config.model.bias
            else None
        )
        # f32 inputs: keeps in-process runs bit-comparable with external
        # models, which receive the batch as float32 over the wire
        shared_classifier = LinearArgmaxClassifier(weights, bias, float32_inputs=True)
    elif model_kind == "external":
        from ..extproto import spawn_external

        shared_classifier = spawn_external(config.model.command)
    else:
        raise ConfigError(f"model.kind: unknown model {model_kind!r}")

    if (
        shared_classifier is not None
        and config.workers > 1
        and not getattr(shared_classifier, "concurrent_safe", True)
    ):
        shared_classifier = SerializedClassifier(shared_classifier)

    existing = read_existing_records(records_path)
    tasks = [
        (sample_index, sigma_index, float(sigma))
        for sample_index in range(images.shape[0])
        for sigma_index, sigma in enumerate(config.noise.sigmas)
        if (sample_index, sigma_index) not in existing
    ]
    log(
        "run_start",
        samples=images.shape[0],
        sigmas=len(config.noise.sigmas),
        method=method_kind,
        model=model_kind,
        resumed=len(existing),
        workers=config.workers,
    )

    writer_lock = Lock()
    results: dict[tuple[int, int], CertRecord] = dict(existing)

    def run_task(task) -> None:
        sample_index, sigma_index, sigma = task
        started = time.perf_counter()
        image = images[sample_index]
        task_seed = derive_task_seed(config.seed, sample_index, sigma_index)
        if shared_classifier is not None:
            classifier = shared_classifier
        else:
            # per-sample test-time adaptation, frozen before sampling begins
            adapt_cfg = zero_cfg.reseeded(mix64(task_seed, PHASE_ADAPT, zero_cfg.seed))
            prompts = zero_shot_adapt(
                bundle.vlm, bundle.base_prompts, image, adapt_cfg
            )
            classifier = bundle.classifier(prompts)
        clean = int(classifier.evaluate(image[None, :])[0])
        outcome = certify(
            classifier,
            image,
            NoiseSpec(
                sigma=sigma,
                n0=config.noise.n0,
                n=config.noise.n,
                alpha=config.noise.alpha,
                seed=task_seed,
            ),
            batch_size=config.noise.batch_size,
        )
        record = CertRecord.from_outcome(
            sample_index=sample_index,
            true_label=int(labels[sample_index]),
            sigma=sigma,
            sigma_index=sigma_index,
            outcome=outcome,
            clean_prediction=clean,
            wall_time_ms=(time.perf_counter() - started) * 1e3,
        )
        with writer_lock:
            with records_path.open("a") as handle:
                handle.write(record.to_json() + "\n")
                handle.flush()
            results[(sample_index, sigma_index)] = record

    try:
        if config.workers == 1:
            for task in tasks:
                run_task(task)
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                list(pool.map(run_task, tasks))
    finally:
        closer = getattr(shared_classifier, "close", None)
        if closer is not None:
            closer()

    ordered = [results[key] for key in sorted(results)]
    write_sorted_records(records_path, ordered)
    log("run_done", records=len(ordered), out=str(records_path))
    return ordered
