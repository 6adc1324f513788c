"""Prompt adaptation for accurate prediction under Gaussian noise.

Two procedures over the frozen toy encoders: few-shot tuning minimizes the
noise-averaged cross-entropy of labeled shots; zero-shot adaptation takes
gradient steps on the entropy of the mean prediction over noisy copies of
one unlabeled test image.  Both draw each copy's noise scale uniformly
from a discrete range, so one learned prompt serves every noise level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeds import PHASE_NOISE, PHASE_SHUFFLE, PHASE_SIGMA, mix64, rng_for
from .toymodel import LossKind, PromptState, SynthDataset, ToyVlm, prompt_gradient

DEFAULT_SIGMA_RANGE = (0.1, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class FewShotConfig:
    shots_per_class: int = 16
    epochs: int = 50
    learning_rate: float = 0.002
    batch_size: int = 16
    t_noise: int = 100  # noise draws per image per step
    sigma_range: tuple[float, ...] = DEFAULT_SIGMA_RANGE
    momentum: float = 0.0
    tau: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.shots_per_class, self.batch_size, self.t_noise) < 1:
            raise ValueError("shots_per_class, batch_size and t_noise must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if len(self.sigma_range) == 0:
            raise ValueError("sigma_range must be non-empty")


@dataclass(frozen=True)
class ZeroShotConfig:
    t_copies: int = 100
    steps: int = 1
    learning_rate: float = 0.002
    sigma_range: tuple[float, ...] = DEFAULT_SIGMA_RANGE
    tau: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.t_copies < 1:
            raise ValueError("t_copies must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if len(self.sigma_range) == 0:
            raise ValueError("sigma_range must be non-empty")

    def reseeded(self, seed: int) -> "ZeroShotConfig":
        """Same hyperparameters, new noise stream; one per test sample."""
        return ZeroShotConfig(
            t_copies=self.t_copies,
            steps=self.steps,
            learning_rate=self.learning_rate,
            sigma_range=self.sigma_range,
            tau=self.tau,
            seed=seed,
        )


def sample_sigmas(sigma_range, count: int, seed: int) -> np.ndarray:
    """Seeded i.i.d. uniform choices from the discrete sigma range."""
    values = np.asarray(tuple(sigma_range), dtype=np.float64)
    if values.size == 0:
        raise ValueError("sigma_range must be non-empty")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    idx = rng_for(seed, PHASE_SIGMA).integers(0, values.size, size=count)
    return values[idx]


def few_shot_train(
    vlm: ToyVlm,
    init: PromptState,
    data: SynthDataset,
    cfg: FewShotConfig,
) -> tuple[PromptState, list[float]]:
    """Plain SGD on the context tokens against the noisy cross-entropy.

    Each step draws a fresh batch, t_noise scales and per-(image, draw)
    Gaussian noise, all from seeded streams, so retraining with one seed
    reproduces the prompt state bit for bit.  Returns the tuned prompts
    and the per-epoch mean loss trace.
    """
    present = np.unique(data.labels)
    if present.size != vlm.num_classes:
        raise ValueError(
            f"training shots cover {present.size} of {vlm.num_classes} classes"
        )
    prompts = init.copy()
    velocity = np.zeros_like(prompts.context)
    trace: list[float] = []
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng_for(cfg.seed, PHASE_SHUFFLE, epoch).permutation(n)
        losses = []
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            pick = order[start : start + cfg.batch_size]
            sigmas = sample_sigmas(
                cfg.sigma_range, cfg.t_noise, mix64(cfg.seed, epoch, step)
            )
            try:
                grad, loss = prompt_gradient(
                    vlm,
                    prompts,
                    (data.images[pick], data.labels[pick]),
                    sigmas,
                    cfg.tau,
                    LossKind.CROSS_ENTROPY,
                    seed=mix64(cfg.seed, PHASE_NOISE, epoch, step),
                )
            except FloatingPointError as exc:
                raise RuntimeError(
                    f"few-shot training diverged at epoch {epoch} step {step}: {exc}"
                ) from exc
            velocity = cfg.momentum * velocity - cfg.learning_rate * grad
            prompts.context += velocity
            losses.append(loss)
        if losses:
            trace.append(float(np.mean(losses)))
    return prompts, trace


def zero_shot_adapt(
    vlm: ToyVlm,
    init: PromptState,
    image: np.ndarray,
    cfg: ZeroShotConfig,
) -> PromptState:
    """Test-time prompt adaptation for a single image.

    Draws t_copies noisy copies once (one sigma per copy from the range)
    and applies ``steps`` gradient-descent updates on the entropy of the
    mean prediction over that fixed set.  Each update starts from the full
    learning-rate step and backs off (halving, at most 8 times) if it
    would raise the objective, so more steps never end above fewer steps.
    The caller re-initializes from the same ``init`` for every new test
    sample; nothing learned here leaks across samples.
    """
    prompts = init.copy()
    image = np.asarray(image, dtype=np.float64).ravel()
    sigmas = sample_sigmas(cfg.sigma_range, cfg.t_copies, mix64(cfg.seed, 0))
    noise_seed = mix64(cfg.seed, PHASE_NOISE, 0)
    batch = (image[None, :], None)

    def entropy_at(state: PromptState) -> float:
        _, value = prompt_gradient(
            vlm, state, batch, sigmas, cfg.tau, LossKind.MEAN_PROB_ENTROPY,
            seed=noise_seed,
        )
        return value

    for step in range(cfg.steps):
        try:
            grad, current = prompt_gradient(
                vlm,
                prompts,
                batch,
                sigmas,
                cfg.tau,
                LossKind.MEAN_PROB_ENTROPY,
                seed=noise_seed,
            )
        except FloatingPointError as exc:
            raise RuntimeError(
                f"zero-shot adaptation diverged at step {step}: {exc}"
            ) from exc
        rate = cfg.learning_rate
        accepted = False
        for _ in range(9):
            candidate = PromptState(context=prompts.context - rate * grad)
            if entropy_at(candidate) <= current:
                prompts = candidate
                accepted = True
                break
            rate *= 0.5
        if not accepted:
            break  # at a local floor of the sampled objective
    return prompts


def combined_promptsmooth(
    vlm: ToyVlm,
    few_shot_result: PromptState,
    image: np.ndarray,
    cfg: ZeroShotConfig,
) -> PromptState:
    """Zero-shot adaptation stacked on top of few-shot-tuned prompts."""
    return zero_shot_adapt(vlm, few_shot_result, image, cfg)


def mean_prediction_entropy(
    vlm: ToyVlm,
    prompts: PromptState,
    image: np.ndarray,
    cfg: ZeroShotConfig,
) -> float:
    """H of the draw-averaged prediction; the quantity adaptation descends.

    Uses the same seeded draws as step 0 of ``zero_shot_adapt`` so the
    before/after comparison is on identical noise.
    """
    sigmas = sample_sigmas(cfg.sigma_range, cfg.t_copies, mix64(cfg.seed, 0))
    image = np.asarray(image, dtype=np.float64).ravel()
    _, loss = prompt_gradient(
        vlm,
        prompts,
        (image[None, :], None),
        sigmas,
        cfg.tau,
        LossKind.MEAN_PROB_ENTROPY,
        seed=mix64(cfg.seed, PHASE_NOISE, 0),
    )
    return loss
