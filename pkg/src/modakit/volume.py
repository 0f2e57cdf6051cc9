"""Scalar and label volumes.

Arrays are indexed ``data[x, y, z]``.  Spacing and origin are float64 in
memory; NIfTI stores them as float32, so geometry read back from disk can
differ in the last bits.  Compare spacings with :func:`spacing_close`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence, Tuple

import numpy as np

from .errors import DataError, ShapeError

if TYPE_CHECKING:
    from .nifti import NiftiHeader

Vec3 = Tuple[float, float, float]

DEFAULT_LABELS = (0, 1, 2)
LABEL_NAMES = {1: "Tumor", 2: "Cochlea"}


SPACING_RTOL = 1e-6


def as_triplet(values: Iterable[float], name: str) -> Vec3:
    vals = tuple(float(v) for v in values)
    if len(vals) != 3:
        raise ShapeError(f"{name} must have 3 components, got {len(vals)}")
    if not all(np.isfinite(vals)):
        raise DataError(f"{name} must be finite, got {vals}")
    return vals  # type: ignore[return-value]


def _check_geometry(data: np.ndarray, spacing: Vec3) -> None:
    if data.ndim != 3:
        raise ShapeError(f"volume data must be 3D, got shape {data.shape}")
    if min(data.shape) < 1:
        raise ShapeError(f"volume dims must be positive, got {data.shape}")
    if not all(s > 0 for s in spacing):
        raise DataError(f"spacing must be strictly positive, got {spacing}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    """Intensity volume with voxel spacing (mm) and origin (mm, center of voxel 0).

    ``header`` optionally carries the NIfTI header the volume was read from so
    that orientation fields survive a rewrite untouched.
    """

    data: np.ndarray
    spacing: Vec3
    origin: Vec3 = (0.0, 0.0, 0.0)
    header: "NiftiHeader | None" = field(default=None, repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        spacing = as_triplet(self.spacing, "spacing")
        origin = as_triplet(self.origin, "origin")
        _check_geometry(data, spacing)
        if not np.all(np.isfinite(data)):
            raise DataError("scalar volume contains non-finite values")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    def with_data(self, data: np.ndarray, **changes) -> "ScalarVolume":
        return replace(self, data=data, **changes)


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Integer class map (0 background, 1 vestibular schwannoma, 2 cochlea).

    Labels are stored as ``uint8``; values must be integers in ``[0, 255]``.
    Membership in a task-specific label set is checked with
    :meth:`check_labels`, which :func:`modakit.nifti.read_nifti` calls on load.
    """

    data: np.ndarray
    spacing: Vec3
    origin: Vec3 = (0.0, 0.0, 0.0)
    header: "NiftiHeader | None" = field(default=None, repr=False)

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.dtype.kind == "b":
            raw = raw.astype(np.uint8)
        if raw.dtype.kind not in "ui":
            if not np.all(np.isfinite(raw)) or not np.all(raw == np.round(raw)):
                raise DataError("label volume contains non-integer values")
        if raw.size and (raw.min() < 0 or raw.max() > 255):
            raise DataError("labels must lie in [0, 255]")
        data = np.array(raw, dtype=np.uint8, copy=True)
        spacing = as_triplet(self.spacing, "spacing")
        origin = as_triplet(self.origin, "origin")
        _check_geometry(data, spacing)
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    def with_data(self, data: np.ndarray, **changes) -> "LabelVolume":
        return replace(self, data=data, **changes)

    def labels_present(self) -> set[int]:
        return {int(v) for v in np.unique(self.data)}

    def check_labels(self, allowed: Iterable[int] = DEFAULT_LABELS) -> None:
        extra = self.labels_present() - {int(a) for a in allowed}
        if extra:
            raise DataError(f"labels {sorted(extra)} not in allowed set {sorted(allowed)}")

    def mask(self, label: int) -> "BinaryMask":
        return BinaryMask(self.data == label, self.spacing)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean foreground mask with the spacing of the volume it came from."""

    data: np.ndarray
    spacing: Vec3

    def __post_init__(self):
        data = np.array(self.data, dtype=bool, copy=True)
        spacing = as_triplet(self.spacing, "spacing")
        _check_geometry(data, spacing)
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]


def spacing_close(a: Sequence[float], b: Sequence[float]) -> bool:
    """Equal up to float32 storage precision."""
    return bool(np.allclose(a, b, rtol=SPACING_RTOL, atol=0.0))


def same_geometry(a, b) -> bool:
    """True when two volumes share dims and (to float32 precision) spacing."""
    return a.dims == b.dims and spacing_close(a.spacing, b.spacing)


def require_same_dims(a, b, what: str = "volumes") -> None:
    if a.dims != b.dims:
        raise ShapeError(f"{what} differ in dims: {a.dims} vs {b.dims}")
