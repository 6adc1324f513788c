"""Desk-scale differentiable stand-in for a vision-language model.

Linear image/text encoders with L2-normalized outputs, learnable context
tokens shared across classes, exact chain-rule gradients of the two prompt
losses, a synthetic clustered dataset, and the analytic linear-classifier
oracle used to check certification soundness end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .seeds import mix64, rng_for
from .stats import std_normal_cdf
from .vlmhead import ClassPromptSet, ZeroShotClassifier

DEFAULT_IMAGE_DIM = 64  # 8x8 single-channel images, flattened
DEFAULT_EMBED_DIM = 16
DEFAULT_TOKEN_DIM = 16
DEFAULT_CONTEXT_TOKENS = 5

_TEMPLATE_SEED = 0x7E3A91  # fixed stream for the deterministic noisy-template init


class LossKind(Enum):
    CROSS_ENTROPY = "cross_entropy"
    MEAN_PROB_ENTROPY = "mean_prob_entropy"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ToyVlm:
    """Frozen encoder parameter bundle.

    ``w_img`` projects flattened images to the shared embedding space,
    ``w_txt`` projects mean-pooled token sequences, and ``class_tokens``
    holds one fixed token embedding per class.  All arrays are read-only:
    prompt learning never touches the backbone.
    """

    w_img: np.ndarray = field(repr=False)
    w_txt: np.ndarray = field(repr=False)
    class_tokens: np.ndarray = field(repr=False)
    init_seed: int = 0

    def __post_init__(self) -> None:
        w_img = _freeze(self.w_img)
        w_txt = _freeze(self.w_txt)
        tokens = _freeze(self.class_tokens)
        if w_img.ndim != 2 or w_txt.ndim != 2 or tokens.ndim != 2:
            raise ValueError("ToyVlm parameters must all be matrices")
        if w_img.shape[0] != w_txt.shape[0]:
            raise ValueError(
                f"image and text embed dims differ: {w_img.shape[0]} vs {w_txt.shape[0]}"
            )
        if tokens.shape[1] != w_txt.shape[1]:
            raise ValueError(
                f"class token dim {tokens.shape[1]} != text input dim {w_txt.shape[1]}"
            )
        for name, arr in (("w_img", w_img), ("w_txt", w_txt), ("class_tokens", tokens)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        object.__setattr__(self, "w_img", w_img)
        object.__setattr__(self, "w_txt", w_txt)
        object.__setattr__(self, "class_tokens", tokens)

    @property
    def embed_dim(self) -> int:
        return self.w_img.shape[0]

    @property
    def image_dim(self) -> int:
        return self.w_img.shape[1]

    @property
    def token_dim(self) -> int:
        return self.w_txt.shape[1]

    @property
    def num_classes(self) -> int:
        return self.class_tokens.shape[0]

    @staticmethod
    def random(
        num_classes: int,
        image_dim: int = DEFAULT_IMAGE_DIM,
        embed_dim: int = DEFAULT_EMBED_DIM,
        token_dim: int = DEFAULT_TOKEN_DIM,
        seed: int = 0,
    ) -> "ToyVlm":
        """Unstructured random encoders; useful for gradient checks."""
        rng = rng_for(seed, 0xF1)
        w_img = rng.standard_normal((embed_dim, image_dim)) / math.sqrt(image_dim)
        w_txt = rng.standard_normal((embed_dim, token_dim)) / math.sqrt(token_dim)
        tokens = rng.standard_normal((num_classes, token_dim))
        return ToyVlm(w_img=w_img, w_txt=w_txt, class_tokens=tokens, init_seed=seed)

    @staticmethod
    def aligned(
        class_means: np.ndarray,
        embed_dim: int = DEFAULT_EMBED_DIM,
        context_tokens: int = DEFAULT_CONTEXT_TOKENS,
        alignment: float = 0.1,
        distractor: float = 0.1,
        imbalance: float = 0.2,
        seed: int = 0,
    ) -> "ToyVlm":
        """Encoders 'pretrained' against a set of image class means.

        Mirrors a contrastively trained model: each class token carries an
        ``alignment``-scaled copy of its class's image-embedding direction
        plus a shared off-manifold component of weight distractor * (1 +/-
        imbalance), graded across classes.  Because text embeddings are
        L2-normalized, the unequal shared weights mute some classes' signal
        more than others; a learned context that rebalances the shared
        component restores accuracy under noise, while the hand-crafted
        context leaves the bias in place.  Tokens are centered against the
        deterministic noisy-template context, which puts that template in
        the small-norm, high-sensitivity region of the normalization: the
        regime where a single test-time gradient step is effective.
        """
        class_means = np.asarray(class_means, dtype=np.float64)
        num_classes, image_dim = class_means.shape
        rng = rng_for(seed, 0xA7)
        w_img = rng.standard_normal((embed_dim, image_dim)) / math.sqrt(image_dim)
        # orthonormal text projection keeps the token-space geometry exact
        q, r = np.linalg.qr(rng.standard_normal((embed_dim, embed_dim)))
        w_txt = q * np.sign(np.diag(r))[None, :]
        targets = (w_img @ class_means.T).T  # [K x d]
        targets /= np.linalg.norm(targets, axis=1, keepdims=True)
        # shared component orthogonal to every class direction
        shared = rng.standard_normal(embed_dim)
        basis, _ = np.linalg.qr(targets.T)
        shared -= basis @ (basis.T @ shared)
        shared /= np.linalg.norm(shared)
        grades = np.linspace(-1.0, 1.0, num_classes)
        weights = distractor * (1.0 + imbalance * grades)
        embed_tokens = alignment * targets + weights[:, None] * shared[None, :]
        tokens = embed_tokens @ w_txt  # w_txt orthogonal: inverse is transpose
        template_sum = (
            PromptState.template(num_tokens=context_tokens, token_dim=embed_dim)
            .context.sum(axis=0)
        )
        tokens = tokens - template_sum[None, :]
        return ToyVlm(w_img=w_img, w_txt=w_txt, class_tokens=tokens, init_seed=seed)


@dataclass
class PromptState:
    """Learnable context tokens; the one mutable piece of the model.

    Shape [M_ctx x e] shares one context across classes (the default,
    unified variant); [K x M_ctx x e] gives every class its own context
    tokens.  Only the optimizer writes to ``context``.
    """

    context: np.ndarray

    def __post_init__(self) -> None:
        self.context = np.array(self.context, dtype=np.float64)
        if self.context.ndim not in (2, 3) or self.context.shape[-2] < 1:
            raise ValueError(
                "context must be [M_ctx x e] or [K x M_ctx x e] with M_ctx >= 1"
            )
        if not np.all(np.isfinite(self.context)):
            raise ValueError("non-finite entries in context tokens")

    @property
    def per_class(self) -> bool:
        return self.context.ndim == 3

    @property
    def num_tokens(self) -> int:
        return self.context.shape[-2]

    @property
    def token_dim(self) -> int:
        return self.context.shape[-1]

    def copy(self) -> "PromptState":
        return PromptState(context=self.context.copy())

    @staticmethod
    def random(
        num_tokens: int = DEFAULT_CONTEXT_TOKENS,
        token_dim: int = DEFAULT_TOKEN_DIM,
        seed: int = 0,
        scale: float = 0.02,
        num_classes: int | None = None,
    ) -> "PromptState":
        rng = rng_for(seed, 0xC7)
        shape = (num_tokens, token_dim)
        if num_classes is not None:
            shape = (num_classes,) + shape
        return PromptState(context=rng.standard_normal(shape) * scale)

    @staticmethod
    def template(
        num_tokens: int = DEFAULT_CONTEXT_TOKENS,
        token_dim: int = DEFAULT_TOKEN_DIM,
        scale: float = 0.02,
        num_classes: int | None = None,
    ) -> "PromptState":
        """Deterministic 'noisy template' context: the hand-crafted-prompt
        stand-in.  Same for every run; does not depend on any user seed.
        The per-class variant starts as K copies of the shared pattern."""
        rng = rng_for(_TEMPLATE_SEED)
        context = rng.standard_normal((num_tokens, token_dim)) * scale
        if num_classes is not None:
            context = np.tile(context, (num_classes, 1, 1))
        return PromptState(context=context)


def encode_image(vlm: ToyVlm, image: np.ndarray) -> np.ndarray:
    """normalize(W_img @ image); raises if the projection is zero."""
    image = np.asarray(image, dtype=np.float64).ravel()
    if image.size != vlm.image_dim:
        raise ValueError(f"image dim {image.size} != expected {vlm.image_dim}")
    z = vlm.w_img @ image
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise ValueError("degenerate image: projection is the zero vector")
    return z / norm


def encode_image_batch(vlm: ToyVlm, batch: np.ndarray) -> np.ndarray:
    """Row-wise ``encode_image`` for a [B x D] batch."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    z = batch @ vlm.w_img.T
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        bad = int(np.nonzero(norms.ravel() == 0.0)[0][0])
        raise ValueError(f"degenerate image at batch row {bad}: zero projection")
    return z / norms


def _pooled_tokens(vlm: ToyVlm, prompts: PromptState) -> np.ndarray:
    """Mean-pool context tokens with each class token: [K x e]."""
    if prompts.token_dim != vlm.token_dim:
        raise ValueError(
            f"context token dim {prompts.token_dim} != model dim {vlm.token_dim}"
        )
    if prompts.per_class:
        if prompts.context.shape[0] != vlm.num_classes:
            raise ValueError(
                f"per-class context has {prompts.context.shape[0]} classes, "
                f"model has {vlm.num_classes}"
            )
        ctx_sum = prompts.context.sum(axis=1)  # [K x e]
        return (ctx_sum + vlm.class_tokens) / (prompts.num_tokens + 1)
    ctx_sum = prompts.context.sum(axis=0)
    return (ctx_sum[None, :] + vlm.class_tokens) / (prompts.num_tokens + 1)


def encode_text(vlm: ToyVlm, prompts: PromptState, class_index: int) -> np.ndarray:
    """normalize(W_txt @ mean(context tokens, class token))."""
    if not 0 <= class_index < vlm.num_classes:
        raise ValueError(f"class index {class_index} out of range")
    m = _pooled_tokens(vlm, prompts)[class_index]
    z = vlm.w_txt @ m
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise ValueError("degenerate prompt: text projection is the zero vector")
    return z / norm


def class_embeddings(vlm: ToyVlm, prompts: PromptState) -> np.ndarray:
    """All K text embeddings, unit rows [K x d]."""
    t = _pooled_tokens(vlm, prompts) @ vlm.w_txt.T
    norms = np.linalg.norm(t, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        bad = int(np.nonzero(norms.ravel() == 0.0)[0][0])
        raise ValueError(f"degenerate prompt for class {bad}: zero projection")
    return t / norms


def build_prompt_set(
    vlm: ToyVlm,
    prompts: PromptState,
    class_names: tuple[str, ...] | None = None,
    template: str = "{}",
) -> ClassPromptSet:
    names = class_names or tuple(f"class_{i}" for i in range(vlm.num_classes))
    return ClassPromptSet(
        embeddings=class_embeddings(vlm, prompts), class_names=tuple(names),
        template=template,
    )


def make_classifier(
    vlm: ToyVlm,
    prompts: PromptState,
    tau: float = 100.0,
    class_names: tuple[str, ...] | None = None,
    template: str = "{}",
) -> ZeroShotClassifier:
    """Freeze the current prompt state into a BaseClassifier."""
    return ZeroShotClassifier(
        encode_batch=lambda batch: encode_image_batch(vlm, batch),
        prompts=build_prompt_set(vlm, prompts, class_names, template),
        tau=tau,
    )


def prompt_gradient(
    vlm: ToyVlm,
    prompts: PromptState,
    batch: tuple[np.ndarray, np.ndarray | None],
    sigma_draws: np.ndarray,
    tau: float,
    loss_kind: LossKind,
    seed: int,
) -> tuple[np.ndarray, float]:
    """Exact loss gradient w.r.t. the context tokens, plus the loss value.

    CROSS_ENTROPY averages -log p_label over batch x noise-draws; it needs
    labels.  MEAN_PROB_ENTROPY is the entropy of the draw-averaged
    probability vector of a single unlabeled image.  Noise draw t of image
    b is Gaussian with scale sigma_draws[t], seeded, so repeated calls with
    one seed see identical noise.  Gradients flow through softmax, cosine
    scores, the L2 normalization, the frozen text projection, and the mean
    pool; encoder weights and class tokens receive none.
    """
    images, labels = batch
    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    sigma_draws = np.asarray(sigma_draws, dtype=np.float64).ravel()
    if sigma_draws.size < 1:
        raise ValueError("sigma_draws must be non-empty")
    if np.any(sigma_draws < 0):
        raise ValueError("noise scales must be >= 0")
    if not tau > 0:
        raise ValueError(f"temperature must be > 0, got {tau!r}")
    if loss_kind is LossKind.CROSS_ENTROPY:
        if labels is None:
            raise ValueError("CROSS_ENTROPY needs labels")
        labels = np.asarray(labels, dtype=np.int64).ravel()
        if labels.size != images.shape[0]:
            raise ValueError(f"{labels.size} labels for {images.shape[0]} images")
    elif loss_kind is LossKind.MEAN_PROB_ENTROPY:
        if labels is not None:
            raise ValueError("MEAN_PROB_ENTROPY is unsupervised; drop the labels")
        if images.shape[0] != 1:
            raise ValueError("MEAN_PROB_ENTROPY adapts to a single image")
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")

    n_images, dim = images.shape
    n_draws = sigma_draws.size
    rows = n_images * n_draws

    # text side forward; kept un-normalized pieces for the backward pass
    pooled = _pooled_tokens(vlm, prompts)  # [K x e]
    t = pooled @ vlm.w_txt.T  # [K x d]
    t_norms = np.linalg.norm(t, axis=1, keepdims=True)
    if np.any(t_norms == 0.0):
        bad = int(np.nonzero(t_norms.ravel() == 0.0)[0][0])
        raise ValueError(f"degenerate prompt for class {bad}: zero projection")
    u = t / t_norms  # [K x d]

    # image side forward under seeded noise
    rng = rng_for(seed)
    delta = rng.standard_normal((n_images, n_draws, dim)) * sigma_draws[None, :, None]
    noisy = (images[:, None, :] + delta).reshape(rows, dim)
    v = encode_image_batch(vlm, noisy)  # [rows x d]

    scores = v @ u.T  # cosine of unit vectors
    logits = tau * scores
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    # same strict-positivity floor as the inference head: keeps log(q) finite
    exp = np.maximum(exp, np.finfo(np.float64).tiny)
    probs = exp / exp.sum(axis=1, keepdims=True)  # [rows x K]

    if loss_kind is LossKind.CROSS_ENTROPY:
        row_labels = np.repeat(labels, n_draws)
        picked = probs[np.arange(rows), row_labels]
        loss = float(-np.log(picked).mean())
        d_scores = probs.copy()
        d_scores[np.arange(rows), row_labels] -= 1.0
        d_scores *= tau / rows
    else:
        q_bar = probs.mean(axis=0)
        loss = float(-(q_bar * np.log(q_bar)).sum())
        g = -(np.log(q_bar) + 1.0)  # dH/dq_bar
        inner = probs @ g  # [rows]
        d_scores = (tau / rows) * probs * (g[None, :] - inner[:, None])

    if not math.isfinite(loss):
        raise FloatingPointError(
            f"non-finite {loss_kind.value} loss; context tokens "
            f"0..{prompts.num_tokens - 1} may have diverged"
        )

    # backward through the text tower only; the image tower has no prompts
    d_u = d_scores.T @ v  # [K x d]
    d_t = (d_u - (d_u * u).sum(axis=1, keepdims=True) * u) / t_norms
    d_pooled = d_t @ vlm.w_txt  # [K x e]
    if prompts.per_class:
        # every token of class i's context receives d_pooled[i] / (M+1)
        per_token = d_pooled / (prompts.num_tokens + 1)  # [K x e]
        grad = np.tile(per_token[:, None, :], (1, prompts.num_tokens, 1))
    else:
        shared = d_pooled.sum(axis=0) / (prompts.num_tokens + 1)  # [e]
        grad = np.tile(shared, (prompts.num_tokens, 1))
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(
            f"non-finite gradient in the context update (shape {grad.shape})"
        )
    return grad, loss


@dataclass(frozen=True)
class SynthDataset:
    """Gaussian clusters around well-separated class means in [0,1]^D."""

    images: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    class_means: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", _freeze(self.images))
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_means", _freeze(self.class_means))

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def image_dim(self) -> int:
        return self.images.shape[1]

    def __len__(self) -> int:
        return self.images.shape[0]


SAMPLE_NOISE_STD = 0.05


def _min_pairwise_distance(points: np.ndarray) -> float:
    diffs = points[:, None, :] - points[None, :, :]
    dists = np.linalg.norm(diffs, axis=2)
    np.fill_diagonal(dists, np.inf)
    return float(dists.min())


def synth_dataset(
    num_classes: int,
    image_dim: int,
    per_class: int,
    separation: float,
    seed: int = 0,
) -> SynthDataset:
    """Deterministic clustered dataset generator.

    Class means are drawn uniformly in [0,1]^D and, when too close, pushed
    apart about their centroid until every pair is at least ``separation``
    apart; samples add N(0, 0.05^2) noise and are clamped back to [0,1].
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if not separation > 0:
        raise ValueError("separation must be > 0")
    if separation > math.sqrt(image_dim):
        raise ValueError(
            f"separation {separation} infeasible in [0,1]^{image_dim} "
            f"(diameter {math.sqrt(image_dim):.3f})"
        )

    means = None
    for attempt in range(64):
        cand = rng_for(seed, 0xD5, attempt).uniform(size=(num_classes, image_dim))
        d_min = _min_pairwise_distance(cand)
        if d_min < separation:
            centroid = cand.mean(axis=0)
            cand = np.clip(
                centroid + (cand - centroid) * (1.05 * separation / d_min), 0.0, 1.0
            )
            d_min = _min_pairwise_distance(cand)
        if d_min >= separation:
            means = cand
            break
    if means is None:
        raise ValueError(
            f"could not place {num_classes} means at separation {separation} "
            f"in [0,1]^{image_dim}"
        )

    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng_for(seed, 0xD6).standard_normal((labels.size, image_dim))
    images = np.clip(means[labels] + SAMPLE_NOISE_STD * noise, 0.0, 1.0)
    return SynthDataset(images=images, labels=labels, class_means=means, seed=seed)


def synth_split(
    num_classes: int,
    image_dim: int,
    per_class_train: int,
    per_class_test: int,
    separation: float,
    seed: int = 0,
) -> tuple[SynthDataset, SynthDataset]:
    """Train/test datasets drawn around one shared set of class means."""
    combined = synth_dataset(
        num_classes, image_dim, per_class_train + per_class_test, separation, seed
    )
    train_rows, test_rows = [], []
    for k in range(num_classes):
        idx = np.nonzero(combined.labels == k)[0]
        train_rows.append(idx[:per_class_train])
        test_rows.append(idx[per_class_train:])
    train_idx = np.concatenate(train_rows)
    test_idx = np.concatenate(test_rows)
    train = SynthDataset(
        images=combined.images[train_idx],
        labels=combined.labels[train_idx],
        class_means=combined.class_means,
        seed=mix64(seed, 0x7A),
    )
    test = SynthDataset(
        images=combined.images[test_idx],
        labels=combined.labels[test_idx],
        class_means=combined.class_means,
        seed=mix64(seed, 0x7B),
    )
    return train, test


def take_shots(dataset: SynthDataset, shots_per_class: int, seed: int = 0) -> SynthDataset:
    """Seeded N-shot restriction, without replacement, per class."""
    picks = []
    for k in range(dataset.num_classes):
        idx = np.nonzero(dataset.labels == k)[0]
        if idx.size < shots_per_class:
            raise ValueError(
                f"class {k} has {idx.size} samples, cannot take {shots_per_class} shots"
            )
        chosen = rng_for(seed, 0x5B, k).choice(idx, size=shots_per_class, replace=False)
        picks.append(np.sort(chosen))
    order = np.concatenate(picks)
    return SynthDataset(
        images=dataset.images[order].copy(),
        labels=dataset.labels[order].copy(),
        class_means=dataset.class_means.copy(),
        seed=mix64(dataset.seed, 0x5B, seed),
    )


class LinearBinaryClassifier:
    """f(x) = 1[w.x + b > 0]; the analytically tractable test classifier."""

    num_classes = 2
    concurrent_safe = True

    def __init__(self, w: np.ndarray, b: float = 0.0):
        self.w = np.asarray(w, dtype=np.float64).ravel()
        self.b = float(b)
        if np.linalg.norm(self.w) == 0.0:
            raise ValueError("weight vector must be nonzero")

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        return (batch @ self.w + self.b > 0.0).astype(np.int64)


class LinearArgmaxClassifier:
    """Multi-class argmax(W x + b) with lowest-index tie-breaking.

    With ``float32_inputs`` the batch is rounded through float32 before
    scoring; the external-classifier wire carries float32, so this makes
    an in-process run see exactly what a subprocess model sees.
    """

    concurrent_safe = True

    def __init__(
        self,
        weights: np.ndarray,
        bias: np.ndarray | None = None,
        float32_inputs: bool = False,
    ):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be [K x D]")
        self.bias = (
            np.zeros(self.weights.shape[0])
            if bias is None
            else np.asarray(bias, dtype=np.float64).ravel()
        )
        if self.bias.size != self.weights.shape[0]:
            raise ValueError("bias length must match the number of classes")
        self.num_classes = self.weights.shape[0]
        self.float32_inputs = bool(float32_inputs)

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if self.float32_inputs:
            batch = batch.astype("<f4").astype(np.float64)
        scores = batch @ self.weights.T + self.bias
        return np.argmax(scores, axis=1).astype(np.int64)


def linear_oracle(
    w: np.ndarray, b: float, x: np.ndarray, sigma: float
) -> tuple[float, float, int]:
    """Analytic ground truth for the binary linear classifier under noise.

    P[f(x + delta) = 1] = Phi((w.x + b) / (sigma * ||w||)); the majority
    class's probability and the exact certified radius |w.x + b| / ||w||
    follow in closed form.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64).ravel()
    w_norm = float(np.linalg.norm(w))
    if w_norm == 0.0:
        raise ValueError("weight vector must be nonzero")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    margin = float(w @ x + b)
    p_one = std_normal_cdf(margin / (sigma * w_norm))
    majority = 1 if margin > 0 else 0  # tie at the boundary -> lowest index
    p_a = p_one if majority == 1 else 1.0 - p_one
    return p_a, abs(margin) / w_norm, majority
