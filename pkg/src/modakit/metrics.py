"""Segmentation metrics: Dice, average symmetric surface distance, and reports.

Conventions:

* Dice of two empty masks is 1.0; Dice with exactly one empty mask is 0.0.
* The surface of a mask is every foreground voxel with at least one
  6-connected neighbor that is background or outside the volume.
* ASSD is undefined (``UndefinedMetricError``) when either surface is empty.
  Case reports record such values as missing with the reason and leave them
  out of aggregates.
* Distances are between voxel centers, in mm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ShapeError, UndefinedMetricError
from .volume import LABEL_NAMES, BinaryMask, LabelVolume, spacing_close

_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


def _check_pair(pred: BinaryMask, gt: BinaryMask, spacing: bool = False) -> None:
    if pred.dims != gt.dims:
        raise ShapeError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    if spacing and not spacing_close(pred.spacing, gt.spacing):
        raise ShapeError(f"mask spacing differs: {pred.spacing} vs {gt.spacing}")


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    _check_pair(pred, gt)
    p = int(pred.data.sum())
    g = int(gt.data.sum())
    if p + g == 0:
        return 1.0
    inter = int(np.logical_and(pred.data, gt.data).sum())
    return 2.0 * inter / (p + g)


def surface_mask(mask: BinaryMask) -> np.ndarray:
    """Boolean array marking the surface voxels of ``mask``."""
    interior = ndimage.binary_erosion(mask.data, structure=_SIX_CONNECTED, border_value=0)
    return mask.data & ~interior


def extract_surface(mask: BinaryMask) -> set:
    """Surface voxels as a set of ``(x, y, z)`` index tuples."""
    return {tuple(int(v) for v in idx) for idx in np.argwhere(surface_mask(mask))}


def _distances_to(target: np.ndarray, query: np.ndarray, spacing) -> np.ndarray:
    """Distance (mm) from each ``query`` voxel to the nearest ``target`` voxel.

    Runs an exact Euclidean distance transform of the complement of
    ``target`` on the joint bounding box; all feature voxels lie inside it, so
    cropping does not change any distance.
    """
    both = np.argwhere(target | query)
    lo = both.min(axis=0)
    hi = both.max(axis=0) + 1
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    dt = ndimage.distance_transform_edt(~target[box], sampling=spacing)
    return dt[query[box]]


def surface_distances(pred: BinaryMask, gt: BinaryMask):
    """Per-voxel nearest distances pred->gt and gt->pred over the two surfaces."""
    _check_pair(pred, gt, spacing=True)
    sp, sg = surface_mask(pred), surface_mask(gt)
    if not sp.any() or not sg.any():
        side = "both" if not (sp.any() or sg.any()) else ("pred" if not sp.any() else "gt")
        raise UndefinedMetricError(f"ASSD undefined: {side} surface is empty", side)
    return _distances_to(sg, sp, pred.spacing), _distances_to(sp, sg, pred.spacing)


def assd(pred: BinaryMask, gt: BinaryMask) -> float:
    d_pg, d_gp = surface_distances(pred, gt)
    return float((d_pg.sum() + d_gp.sum()) / (d_pg.size + d_gp.size))


# ----------------------------------------------------------------------------
# per-case and aggregate reports

@dataclass
class CaseMetrics:
    case_id: str
    dice: Dict[int, float]
    assd: Dict[int, Optional[float]]
    missing: Dict[int, str] = field(default_factory=dict)

    @property
    def mean_dice(self) -> float:
        vals = list(self.dice.values())
        return float(sum(vals) / len(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "mean_dice": self.mean_dice,
            "dice": {str(k): v for k, v in sorted(self.dice.items())},
            "assd": {str(k): v for k, v in sorted(self.assd.items())},
            "assd_missing": {str(k): v for k, v in sorted(self.missing.items())},
        }


def evaluate_case(pred: LabelVolume, gt: LabelVolume, labels: Sequence[int] = (1, 2), case_id: str = "") -> CaseMetrics:
    if pred.dims != gt.dims:
        raise ShapeError(f"prediction {pred.dims} and ground truth {gt.dims} differ in dims")
    if not spacing_close(pred.spacing, gt.spacing):
        raise ShapeError(f"prediction {pred.spacing} and ground truth {gt.spacing} differ in spacing")
    dices: Dict[int, float] = {}
    dists: Dict[int, Optional[float]] = {}
    missing: Dict[int, str] = {}
    for lab in labels:
        p, g = pred.mask(lab), gt.mask(lab)
        dices[lab] = dice(p, g)
        try:
            dists[lab] = assd(p, g)
        except UndefinedMetricError as exc:
            dists[lab] = None
            missing[lab] = f"empty {exc.side} surface"
    return CaseMetrics(case_id, dices, dists, missing)


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    n: int
    excluded: int = 0

    def fmt(self, digits: int = 4) -> str:
        if self.n == 0:
            return "n/a"
        return f"{self.mean:.{digits}f}±{self.std:.{digits}f}"


def summarize_values(values: Iterable[Optional[float]]) -> Stat:
    """Mean and sample (n-1) standard deviation; ``None`` entries are excluded and counted.

    With a single value the standard deviation is reported as 0.
    """
    vals = list(values)
    kept = [float(v) for v in vals if v is not None]
    excluded = len(vals) - len(kept)
    if not kept:
        return Stat(float("nan"), float("nan"), 0, excluded)
    arr = np.asarray(kept)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return Stat(float(arr.mean()), std, arr.size, excluded)


@dataclass
class AggregateReport:
    name: str
    labels: List[int]
    n_cases: int
    stats: Dict[str, Stat]
    cases: List[CaseMetrics]

    def columns(self) -> List[str]:
        cols = ["mean_dice"]
        for lab in self.labels:
            cols += [f"dice_{lab}", f"assd_{lab}"]
        return cols

    def to_dict(self) -> dict:
        return {
            "experiment": self.name,
            "n_cases": self.n_cases,
            "labels": list(self.labels),
            "aggregate": {
                k: {
                    "mean": _finite_or_none(s.mean),
                    "std": _finite_or_none(s.std),
                    "n": s.n,
                    "excluded": s.excluded,
                    "formatted": s.fmt(),
                }
                for k, s in ((c, self.stats[c]) for c in self.columns())
            },
            "cases": [c.to_dict() for c in self.cases],
        }

    def table(self) -> str:
        """Plain-text table in the column order Mean Dice, then Dice/ASSD per label."""
        heads = ["Experiment", "Mean Dice"]
        for lab in self.labels:
            name = LABEL_NAMES.get(lab, f"Label {lab}")
            heads += [f"{name} Dice", f"{name} ASSD"]
        row = [self.name] + [self.stats[c].fmt() for c in self.columns()]
        widths = [max(len(h), len(v)) for h, v in zip(heads, row)]
        line = lambda cells: " | ".join(c.ljust(w) for c, w in zip(cells, widths))
        out = [line(heads), "-+-".join("-" * w for w in widths), line(row)]
        notes = [f"{c}: {self.stats[c].excluded} case(s) excluded"
                 for c in self.columns() if self.stats[c].excluded]
        return "\n".join(out + notes) + "\n"


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def aggregate(cases: Sequence[CaseMetrics], name: str = "experiment") -> AggregateReport:
    if not cases:
        raise ValueError("cannot aggregate an empty list of cases")
    labels = sorted(cases[0].dice)
    stats = {"mean_dice": summarize_values(c.mean_dice for c in cases)}
    for lab in labels:
        stats[f"dice_{lab}"] = summarize_values(c.dice.get(lab) for c in cases)
        stats[f"assd_{lab}"] = summarize_values(c.assd.get(lab) for c in cases)
    return AggregateReport(name, labels, len(cases), stats, list(cases))
