"""Small synthetic ceT1-like dataset for smoke tests and demos.

Each case has a dim background with noise, a bright ellipsoid (label 1) and a
pair of small bright blobs (label 2).  Everything is drawn from one seed.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from .manifest import Case, DatasetManifest, save_manifest
from .nifti import write_nifti
from .volume import LabelVolume, ScalarVolume


def _ellipsoid(shape, center, radii) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    r = sum(((g - c) / rad) ** 2 for g, c, rad in zip(grids, center, radii))
    return r <= 1.0


def synthetic_case(
    rng: np.random.Generator,
    dims: Tuple[int, int, int] = (48, 48, 12),
    spacing: Tuple[float, float, float] = (1.2, 1.2, 1.5),
) -> Tuple[ScalarVolume, LabelVolume]:
    """One (image, label) pair with integer-valued intensities (int16-safe)."""
    nx, ny, nz = dims
    labels = np.zeros(dims, dtype=np.uint8)
    tumor_c = (nx * rng.uniform(0.35, 0.65), ny * rng.uniform(0.35, 0.65), nz * rng.uniform(0.4, 0.6))
    tumor_r = (rng.uniform(4, 7), rng.uniform(4, 7), rng.uniform(2, 3.5))
    labels[_ellipsoid(dims, tumor_c, tumor_r)] = 1
    for side in (-1, 1):
        c = (tumor_c[0] + side * nx * 0.3, tumor_c[1] + rng.uniform(-3, 3), tumor_c[2])
        blob = _ellipsoid(dims, c, (1.6, 1.6, 1.2)) & (labels == 0)
        labels[blob] = 2
    image = rng.normal(100.0, 10.0, dims)
    image[labels == 1] += 600.0
    image[labels == 2] += 400.0
    image = np.clip(np.round(image), 0, 32767)
    return ScalarVolume(image, spacing), LabelVolume(labels, spacing)


def write_synthetic_dataset(
    root: Union[str, Path],
    n_cases: int = 8,
    seed: int = 0,
    dims: Sequence[int] = (48, 48, 12),
    spacing: Sequence[float] = (1.2, 1.2, 1.5),
    name: str = "synthetic",
) -> Path:
    """Write ``n_cases`` image/label NIfTI pairs plus ``manifest.json`` under ``root``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_cases):
        cid = f"case{i:03d}"
        image, labels = synthetic_case(rng, tuple(dims), tuple(spacing))
        write_nifti(image, root / "images" / f"{cid}.nii.gz", dtype="int16")
        write_nifti(labels, root / "labels" / f"{cid}.nii.gz")
        cases.append(Case(cid, root / "images" / f"{cid}.nii.gz", root / "labels" / f"{cid}.nii.gz"))
    path = root / "manifest.json"
    save_manifest(DatasetManifest(name, cases), path)
    return path
