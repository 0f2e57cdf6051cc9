"""Augmented-tumor (AT) generation: dim the labeled tumor to mimic heterogeneous signal."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ManifestError, ShapeError
from .manifest import Case, DatasetManifest
from .nifti import read_nifti, write_nifti
from .parallel import map_cases
from .volume import DEFAULT_LABELS, LabelVolume, ScalarVolume

log = logging.getLogger(__name__)

AT_SUFFIX = "_at"


@dataclass(frozen=True)
class AugmentSpec:
    target_label: int = 1
    intensity_factor: float = 0.5
    label_set: Sequence[int] = DEFAULT_LABELS

    def __post_init__(self):
        f = float(self.intensity_factor)
        if not (0.0 < f <= 1.0):
            raise ConfigError(f"intensity_factor must lie in (0, 1], got {self.intensity_factor}")
        if int(self.target_label) not in {int(v) for v in self.label_set}:
            raise ConfigError(f"target_label {self.target_label} not in label set {tuple(self.label_set)}")
        object.__setattr__(self, "label_set", tuple(int(v) for v in self.label_set))

    def to_dict(self) -> dict:
        return {"target_label": int(self.target_label), "intensity_factor": float(self.intensity_factor)}


def reduce_tumor_signal(volume: ScalarVolume, labels: LabelVolume, spec: AugmentSpec = AugmentSpec()) -> ScalarVolume:
    """Multiply intensities under ``spec.target_label`` by ``spec.intensity_factor``."""
    if volume.dims != labels.dims:
        raise ShapeError(f"volume {volume.dims} and labels {labels.dims} differ in dims")
    mask = labels.data == spec.target_label
    out = np.where(mask, volume.data * spec.intensity_factor, volume.data)
    return volume.with_data(out)


def at_path(image: Path, out_dir: Optional[Path] = None, case_id: str = "") -> Path:
    """Where the AT variant of ``image`` is written: beside it with an ``_at`` suffix."""
    name = image.name
    for ext in (".nii.gz", ".nii"):
        if name.endswith(ext):
            stem, suffix = name[: -len(ext)], ext
            break
    else:
        stem, suffix = image.stem, image.suffix
    if out_dir is not None:
        stem = case_id or stem
    return (out_dir or image.parent) / f"{stem}{AT_SUFFIX}{suffix}"


def _augment_one(job, spec: AugmentSpec) -> str:
    image_path, label_path, target = job
    img = read_nifti(image_path, "scalar")
    lab = read_nifti(label_path, "label", labels=spec.label_set)
    write_nifti(reduce_tumor_signal(img, lab, spec), target)
    return str(target)


def expand_dataset(
    manifest: DatasetManifest,
    spec: AugmentSpec = AugmentSpec(),
    out_dir: Union[str, Path, None] = None,
    jobs: int = 1,
) -> DatasetManifest:
    """Add one AT variant (``<case_id>_at``) after every labeled original case.

    Cases already flagged as augmented, and originals whose ``_at`` sibling is
    already listed, are left alone, so running this twice is a no-op.  Cases
    without a label map cannot be augmented and pass through unchanged.
    """
    manifest.validate_files()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    existing = set(manifest.ids())
    todo = []
    for c in manifest.cases:
        if c.augmented or c.case_id + AT_SUFFIX in existing:
            continue
        if c.label is None:
            log.warning("case %s has no label map; not augmented", c.case_id)
            continue
        todo.append(c)

    jobs_in = [(c.image, c.label, at_path(Path(c.image), out, c.case_id)) for c in todo]
    results = map_cases(partial(_augment_one, spec=spec), jobs_in, jobs)
    failed = [f"{c.case_id}: {r}" for c, (ok, r) in zip(todo, results) if not ok]
    if failed:
        raise ManifestError("augmentation failed for " + "; ".join(failed))

    variants = {
        c.case_id: Case(c.case_id + AT_SUFFIX, Path(r), c.label, c.domain, augmented=True)
        for c, (_, r) in zip(todo, results)
    }
    cases = []
    for c in manifest.cases:
        cases.append(c)
        if c.case_id in variants:
            cases.append(variants[c.case_id])
    return manifest.with_cases(cases)
