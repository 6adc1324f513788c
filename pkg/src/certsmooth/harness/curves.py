"""Per-sample certification records and certified-accuracy curves."""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..smoothing import CertifyOutcome


@dataclass(frozen=True)
class CertRecord:
    """One certification attempt: (sample, sigma) -> outcome."""

    sample_index: int
    true_label: int
    sigma: float
    sigma_index: int
    abstain: bool
    label: int  # ABSTAIN when abstaining
    radius: float | None  # present iff non-abstain
    pa_lower: float
    counts: tuple[int, ...]
    clean_prediction: int
    wall_time_ms: float

    def __post_init__(self) -> None:
        if self.abstain != (self.radius is None):
            raise ValueError("radius must be present exactly when not abstaining")

    @property
    def certified_correct(self) -> bool:
        return (not self.abstain) and self.label == self.true_label

    @staticmethod
    def from_outcome(
        sample_index: int,
        true_label: int,
        sigma: float,
        sigma_index: int,
        outcome: CertifyOutcome,
        clean_prediction: int,
        wall_time_ms: float,
    ) -> "CertRecord":
        return CertRecord(
            sample_index=sample_index,
            true_label=true_label,
            sigma=sigma,
            sigma_index=sigma_index,
            abstain=outcome.is_abstain,
            label=outcome.label,
            radius=None if outcome.is_abstain else outcome.radius,
            pa_lower=outcome.pa_lower,
            counts=tuple(int(c) for c in outcome.counts),
            clean_prediction=clean_prediction,
            wall_time_ms=wall_time_ms,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_index": self.sample_index,
                "true_label": self.true_label,
                "sigma": self.sigma,
                "sigma_index": self.sigma_index,
                "abstain": self.abstain,
                "label": self.label,
                "radius": self.radius,
                "pa_lower": self.pa_lower,
                "counts": list(self.counts),
                "clean_prediction": self.clean_prediction,
                "wall_time_ms": self.wall_time_ms,
            },
            separators=(",", ":"),
        )

    @staticmethod
    def from_json(line: str) -> "CertRecord":
        obj = json.loads(line)
        return CertRecord(
            sample_index=int(obj["sample_index"]),
            true_label=int(obj["true_label"]),
            sigma=float(obj["sigma"]),
            sigma_index=int(obj["sigma_index"]),
            abstain=bool(obj["abstain"]),
            label=int(obj["label"]),
            radius=None if obj["radius"] is None else float(obj["radius"]),
            pa_lower=float(obj["pa_lower"]),
            counts=tuple(int(c) for c in obj["counts"]),
            clean_prediction=int(obj["clean_prediction"]),
            wall_time_ms=float(obj["wall_time_ms"]),
        )


@dataclass(frozen=True)
class CurvePoint:
    """Certified accuracy at one radius, with envelope provenance."""

    radius: float
    certified_accuracy: float
    clean_accuracy: float
    sigma_used: float


DEFAULT_RADIUS_GRID = (0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5)


def certified_accuracy_curve(
    records: list[CertRecord], radius_grid=DEFAULT_RADIUS_GRID
) -> list[CurvePoint]:
    """Step-down curve over the radius grid for one noise level.

    certified_accuracy(R) counts non-abstaining, correctly labeled records
    whose radius reaches R; abstentions never count, at any R including 0.
    Clean accuracy is the unperturbed top-1 rate, constant across R.
    """
    if not records:
        raise ValueError("cannot build a curve from zero records")
    sigmas = {r.sigma for r in records}
    if len(sigmas) != 1:
        raise ValueError(f"records mix noise levels {sorted(sigmas)}")
    sigma = records[0].sigma
    total = len(records)
    clean = sum(r.clean_prediction == r.true_label for r in records) / total
    points = []
    for radius in radius_grid:
        hits = sum(
            r.certified_correct and r.radius >= radius for r in records
        )
        points.append(
            CurvePoint(
                radius=float(radius),
                certified_accuracy=hits / total,
                clean_accuracy=clean,
                sigma_used=sigma,
            )
        )
    return points


def group_by_sigma(records: list[CertRecord]) -> dict[float, list[CertRecord]]:
    grouped: dict[float, list[CertRecord]] = {}
    for record in records:
        grouped.setdefault(record.sigma, []).append(record)
    return grouped


def multi_sigma_envelope(curves: list[list[CurvePoint]]) -> list[CurvePoint]:
    """Best certified accuracy over the sigma grid at each radius.

    Ties pick the smaller sigma; each envelope point carries the winning
    sigma and that sigma's clean accuracy.
    """
    if not curves:
        raise ValueError("envelope needs at least one curve")
    grid = [p.radius for p in curves[0]]
    for curve in curves[1:]:
        if [p.radius for p in curve] != grid:
            raise ValueError("curves disagree on the radius grid")
    envelope = []
    for i, radius in enumerate(grid):
        candidates = [curve[i] for curve in curves]
        best = max(
            candidates, key=lambda p: (p.certified_accuracy, -p.sigma_used)
        )
        envelope.append(
            CurvePoint(
                radius=radius,
                certified_accuracy=best.certified_accuracy,
                clean_accuracy=best.clean_accuracy,
                sigma_used=best.sigma_used,
            )
        )
    return envelope
