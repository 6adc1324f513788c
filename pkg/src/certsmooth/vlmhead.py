"""Zero-shot classification head: cosine scores and temperature softmax.

Class labels are rendered through a single-placeholder template, encoded
into per-class text embeddings, and an image embedding is classified by
the temperature-softmax over its cosine similarities to those embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClassPromptSet",
    "ZeroShotClassifier",
    "cosine_similarities",
    "l2_normalize",
    "render_prompt",
    "zero_shot_classify",
    "zero_shot_probs",
]


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Unit-normalize a vector; zero vectors cannot be normalized."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    if not np.isfinite(norm):
        raise ValueError("cannot normalize a vector with non-finite entries")
    return v / norm


def render_prompt(template: str, class_name: str) -> str:
    """Fill the one placeholder of a hand-crafted prompt template."""
    return template.format(class_name)


@dataclass(frozen=True)
class ClassPromptSet:
    """Per-class text embeddings plus the names/template they came from."""

    embeddings: np.ndarray = field(repr=False)  # [K x d], unit rows
    class_names: tuple[str, ...]
    template: str = "{}"

    def __post_init__(self) -> None:
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] < 2:
            raise ValueError("ClassPromptSet needs a [K x d] matrix with K >= 2")
        if len(self.class_names) != emb.shape[0]:
            raise ValueError(
                f"{len(self.class_names)} class names for {emb.shape[0]} embeddings"
            )
        object.__setattr__(self, "embeddings", emb)

    @property
    def num_classes(self) -> int:
        return self.embeddings.shape[0]

    def prompts(self) -> list[str]:
        return [render_prompt(self.template, name) for name in self.class_names]


def cosine_similarities(v: np.ndarray, prompts: ClassPromptSet) -> np.ndarray:
    """Cosine similarity of one image embedding against every class."""
    v = np.asarray(v, dtype=np.float64).ravel()
    u = prompts.embeddings
    if v.size != u.shape[1]:
        raise ValueError(f"embedding dim {v.size} != prompt dim {u.shape[1]}")
    v_norm = float(np.linalg.norm(v))
    u_norms = np.linalg.norm(u, axis=1)
    if v_norm == 0.0 or np.any(u_norms == 0.0):
        raise ValueError("zero-norm embedding has no cosine similarity")
    return (u @ v) / (u_norms * v_norm)


def zero_shot_probs(v: np.ndarray, prompts: ClassPromptSet, tau: float) -> np.ndarray:
    """Temperature softmax over cosine similarities, overflow-safe."""
    if not tau > 0:
        raise ValueError(f"temperature must be > 0, got {tau!r}")
    scores = tau * cosine_similarities(v, prompts)
    scores -= scores.max()
    exp = np.exp(scores)
    # keep every class strictly positive even when tau * gap underflows;
    # the floor is ~1e-308 and never perturbs a representable probability
    exp = np.maximum(exp, np.finfo(np.float64).tiny)
    return exp / exp.sum()


def zero_shot_classify(v: np.ndarray, prompts: ClassPromptSet, tau: float) -> int:
    """Argmax class under ``zero_shot_probs``; ties go to the lowest index."""
    return int(np.argmax(zero_shot_probs(v, prompts, tau)))


class ZeroShotClassifier:
    """BaseClassifier adapter: encode a batch of images, score, argmax.

    ``encode_batch`` must map a [B x D] image batch to [B x d] unit-norm
    embeddings; the prompt set is held immutable while a sample is being
    certified, making evaluation a pure function of its inputs.
    """

    concurrent_safe = True  # pure function of frozen state

    def __init__(self, encode_batch, prompts: ClassPromptSet, tau: float = 100.0):
        if not tau > 0:
            raise ValueError(f"temperature must be > 0, got {tau!r}")
        self._encode_batch = encode_batch
        self._prompts = prompts
        self._tau = tau
        self._class_norms = np.linalg.norm(prompts.embeddings, axis=1)
        if np.any(self._class_norms == 0.0):
            raise ValueError("zero-norm class embedding")
        self.num_classes = prompts.num_classes

    @property
    def prompts(self) -> ClassPromptSet:
        return self._prompts

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        emb = self._encode_batch(batch)
        # temperature is a monotone rescaling: argmax of cosines suffices,
        # and the per-row image norm cannot change a row's argmax
        scores = (emb @ self._prompts.embeddings.T) / self._class_norms
        return np.argmax(scores, axis=1).astype(np.int64)

    def probabilities(self, image: np.ndarray, tau: float | None = None) -> np.ndarray:
        emb = self._encode_batch(np.atleast_2d(np.asarray(image, dtype=np.float64)))
        return zero_shot_probs(emb[0], self._prompts, self._tau if tau is None else tau)
