"""Surface-distance evaluation: mean absolute distance in micrometers.

MAD for one surface is the mean over all (slice, column) pairs where both
prediction and ground truth are valid of |pred - gt| in pixels, times the
axial resolution in micrometers per pixel. Pairs with an INVALID entry on
either side are skipped and counted, never treated as zero error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import SurfaceSet
from .errors import DimensionMismatch, EmptyList, NoValidColumns, SubjectMismatch

__all__ = ["EvalReport", "MadReport", "evaluate_run", "format_mean_sd", "mad", "subject_sd"]


@dataclass(frozen=True)
class MadReport:
    """Per-surface and overall MAD in micrometers for one volume pair.

    A surface with zero evaluable columns is reported as None (missing),
    never as zero. overall_um is the unweighted mean over the surfaces
    that have a value; weighted_overall_um weights by evaluated-pair
    counts instead.
    """

    per_surface_um: tuple[float | None, ...]
    overall_um: float
    weighted_overall_um: float
    columns_evaluated: int
    columns_skipped: int


def mad(pred: SurfaceSet, gt: SurfaceSet, resolution_um_per_px: float) -> MadReport:
    """Mean absolute distance between two surface sets, in micrometers.

    Symmetric in pred/gt; zero iff they agree on every evaluated pair.
    Raises NoValidColumns when not a single surface has an evaluable
    column (a candidate column is one where at least one side is valid).
    """
    if pred.positions.shape != gt.positions.shape:
        raise DimensionMismatch(
            f"prediction {pred.positions.shape} vs ground truth {gt.positions.shape}"
        )
    if not resolution_um_per_px > 0:
        raise ValueError(f"resolution must be > 0, got {resolution_um_per_px}")

    p, g = pred.positions, gt.positions
    both = np.isfinite(p) & np.isfinite(g)
    either = np.isfinite(p) | np.isfinite(g)
    per_surface: list[float | None] = []
    weighted_sum = 0.0
    for b in range(pred.surface_count):
        m = both[:, b, :]
        if not m.any():
            per_surface.append(None)
            continue
        err_px = float(np.mean(np.abs(p[:, b, :][m] - g[:, b, :][m])))
        per_surface.append(resolution_um_per_px * err_px)
        weighted_sum += resolution_um_per_px * err_px * int(m.sum())

    present = [v for v in per_surface if v is not None]
    if not present:
        raise NoValidColumns("no surface has a column where both inputs are valid")
    evaluated = int(both.sum())
    skipped = int(either.sum()) - evaluated
    return MadReport(
        per_surface_um=tuple(per_surface),
        overall_um=float(np.mean(present)),
        weighted_overall_um=weighted_sum / evaluated,
        columns_evaluated=evaluated,
        columns_skipped=skipped,
    )


def subject_sd(per_subject_mad: Sequence[float], population: bool = True) -> float:
    """Standard deviation of per-subject MADs; population (divide by n) by default."""
    if len(per_subject_mad) == 0:
        raise EmptyList("no subjects to aggregate")
    vals = np.asarray(per_subject_mad, dtype=np.float64)
    if population:
        return float(np.sqrt(np.mean((vals - vals.mean()) ** 2)))
    if len(vals) < 2:
        return 0.0
    return float(np.sqrt(np.sum((vals - vals.mean()) ** 2) / (len(vals) - 1)))


def format_mean_sd(mean: float, sd: float) -> str:
    return f"{mean:.2f}±{sd:.2f}"


@dataclass(frozen=True)
class EvalReport:
    """Aggregate over subjects: per-subject reports, per-surface means, mean and SD."""

    per_subject: Mapping[str, MadReport]
    per_surface_mean_um: tuple[float | None, ...]
    mean_um: float
    sd_um: float

    @property
    def formatted(self) -> str:
        return format_mean_sd(self.mean_um, self.sd_um)

    def to_json_dict(self) -> dict:
        return {
            "per_subject": {
                sid: {
                    "per_surface_um": list(r.per_surface_um),
                    "overall_um": r.overall_um,
                    "columns_evaluated": r.columns_evaluated,
                    "columns_skipped": r.columns_skipped,
                }
                for sid, r in sorted(self.per_subject.items())
            },
            "per_surface_mean_um": list(self.per_surface_mean_um),
            "mean_um": self.mean_um,
            "sd_um": self.sd_um,
            "formatted": self.formatted,
        }


def evaluate_run(pred: Mapping[str, SurfaceSet], gt: Mapping[str, SurfaceSet],
                 resolution_um_per_px: float, population_sd: bool = True,
                 weighted: bool = False) -> EvalReport:
    """Evaluate matching subject sets and aggregate mean-over-subjects MAD and SD.

    `weighted` switches the per-subject overall from the unweighted mean
    over surfaces to the evaluated-column-weighted mean.
    """
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    if missing or extra:
        raise SubjectMismatch(
            f"subjects missing from prediction: {missing}; unexpected: {extra}"
        )
    if not gt:
        raise EmptyList("no subjects to evaluate")

    reports = {sid: mad(pred[sid], gt[sid], resolution_um_per_px) for sid in sorted(gt)}
    overalls = [r.weighted_overall_um if weighted else r.overall_um for r in reports.values()]

    surface_count = len(next(iter(reports.values())).per_surface_um)
    per_surface_mean: list[float | None] = []
    for b in range(surface_count):
        vals = [r.per_surface_um[b] for r in reports.values() if r.per_surface_um[b] is not None]
        per_surface_mean.append(float(np.mean(vals)) if vals else None)

    return EvalReport(
        per_subject=reports,
        per_surface_mean_um=tuple(per_surface_mean),
        mean_um=float(np.mean(overalls)),
        sd_um=subject_sd(overalls, population=population_sd),
    )
