"""Preprocessing chain for unpaired 2D translation.

resample -> normalize_intensity -> compute_center_axis -> crop_xy -> slice_z,
plus :func:`stack_z` to rebuild a volume from (possibly translated) slices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, ModeError, ShapeError
from .volume import LabelVolume, ScalarVolume, Vec3, as_triplet, require_same_dims, spacing_close

Volume = Union[ScalarVolume, LabelVolume]


@dataclass(frozen=True)
class PipelineConfig:
    target_spacing: Vec3 = (0.6, 0.6, 1.0)
    crop_size: int = 256
    percentile: float = 0.75
    # "nearest" or "onehot_linear" (trilinear on one-hot channels, then argmax)
    label_interpolation: str = "nearest"

    def __post_init__(self):
        try:
            spacing = tuple(float(s) for s in self.target_spacing)
        except (TypeError, ValueError):
            raise ConfigError(f"target_spacing must be three numbers, got {self.target_spacing!r}") from None
        if len(spacing) != 3 or not all(math.isfinite(s) and s > 0 for s in spacing):
            raise ConfigError(f"target_spacing must be three positive numbers, got {self.target_spacing}")
        object.__setattr__(self, "target_spacing", spacing)
        if int(self.crop_size) != self.crop_size or self.crop_size <= 0 or self.crop_size % 2:
            raise ConfigError(f"crop_size must be a positive even integer, got {self.crop_size}")
        object.__setattr__(self, "crop_size", int(self.crop_size))
        if not 0.0 < float(self.percentile) < 1.0:
            raise ConfigError(f"percentile must lie in (0, 1), got {self.percentile}")
        if self.label_interpolation not in ("nearest", "onehot_linear"):
            raise ConfigError(f"unknown label_interpolation {self.label_interpolation!r}")

    def to_dict(self) -> dict:
        return {
            "target_spacing": list(self.target_spacing),
            "crop_size": self.crop_size,
            "percentile": self.percentile,
            "label_interpolation": self.label_interpolation,
        }


# ----------------------------------------------------------------------------
# resampling

def _source_coords(n_out: int, s_in: float, s_out: float) -> np.ndarray:
    """Continuous source index of each output voxel center.

    Both grids share the outer edge of voxel 0, so the physical extent
    ``n * spacing`` is preserved whenever the output count divides evenly.
    """
    ratio = s_out / s_in
    return (np.arange(n_out, dtype=np.float64) + 0.5) * ratio - 0.5


def output_dims(dims: Sequence[int], spacing: Sequence[float], target: Sequence[float]) -> Tuple[int, int, int]:
    # round() would be banker's rounding; half-up keeps the rule simple to state
    return tuple(max(1, int(math.floor(n * s / t + 0.5))) for n, s, t in zip(dims, spacing, target))  # type: ignore[return-value]


def _linear_axis(data: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    n = data.shape[axis]
    x = np.clip(coords, 0.0, n - 1)
    i0 = np.floor(x).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    w = x - i0
    shape = [1] * data.ndim
    shape[axis] = len(coords)
    w = w.reshape(shape)
    a = np.take(data, i0, axis=axis)
    b = np.take(data, i1, axis=axis)
    return a * (1.0 - w) + b * w


def _nearest_index(coords: np.ndarray, n: int) -> np.ndarray:
    # ceil(x - 0.5) sends exact half-way points to the lower index
    return np.clip(np.ceil(coords - 0.5), 0, n - 1).astype(np.intp)


def resample(
    volume: Volume,
    target_spacing: Sequence[float],
    mode: Literal["trilinear", "nearest"] = "trilinear",
) -> Volume:
    """Resample onto a grid with ``target_spacing`` (mm).

    Output dims are ``round(n * spacing / target)`` (at least 1).  Trilinear
    sampling clamps at the volume boundary; nearest picks the closest source
    voxel center, ties going to the lower index.
    """
    if not _positive(target_spacing):
        raise ConfigError(f"target spacing must be three positive numbers, got {tuple(target_spacing)}")
    target = as_triplet(target_spacing, "target_spacing")
    if mode not in ("trilinear", "nearest"):
        raise ModeError(f"unknown resampling mode {mode!r}")
    if isinstance(volume, LabelVolume) and mode != "nearest":
        raise ModeError("label volumes must be resampled with mode='nearest'")

    dims_out = output_dims(volume.dims, volume.spacing, target)
    coords = [_source_coords(m, s, t) for m, s, t in zip(dims_out, volume.spacing, target)]
    origin = tuple(o + c[0] * s for o, c, s in zip(volume.origin, coords, volume.spacing))

    if mode == "nearest":
        ix, iy, iz = (_nearest_index(c, n) for c, n in zip(coords, volume.dims))
        data = volume.data[np.ix_(ix, iy, iz)]
    else:
        data = volume.data
        for axis, c in enumerate(coords):
            data = _linear_axis(data, c, axis)
    return type(volume)(data, target, origin)


def _positive(values: Sequence[float]) -> bool:
    try:
        vals = [float(v) for v in values]
    except (TypeError, ValueError):
        return False
    return len(vals) == 3 and all(math.isfinite(v) and v > 0 for v in vals)


def resample_labels_onehot(labels: LabelVolume, target_spacing: Sequence[float]) -> LabelVolume:
    """Alternative label resampling: trilinear per one-hot channel, then argmax.

    Ties go to the lowest label value.  Only labels present in the input can
    appear in the output.
    """
    present = sorted(labels.labels_present())
    best = None
    best_val = None
    for lab in present:
        chan = ScalarVolume((labels.data == lab).astype(np.float64), labels.spacing, labels.origin)
        res = resample(chan, target_spacing, "trilinear")
        if best is None:
            best = np.full(res.dims, lab, dtype=np.uint8)
            best_val = res.data.copy()
            geom = res
            continue
        better = res.data > best_val
        best[better] = lab
        best_val = np.where(better, res.data, best_val)
    return LabelVolume(best, geom.spacing, geom.origin)


# ----------------------------------------------------------------------------
# intensity and center

def normalize_intensity(volume: ScalarVolume) -> ScalarVolume:
    """Min-max scale to [0, 1]; a constant volume becomes all zeros."""
    lo = float(volume.data.min())
    hi = float(volume.data.max())
    if hi == lo:
        return volume.with_data(np.zeros(volume.dims))
    return volume.with_data((volume.data - lo) / (hi - lo))


def nearest_rank_percentile(values: np.ndarray, q: float) -> float:
    """Smallest value with at least ``q`` of the samples at or below it."""
    flat = np.asarray(values).ravel()
    rank = max(1, int(math.ceil(q * flat.size)))
    return float(np.partition(flat, rank - 1)[rank - 1])


def compute_center_axis(volume: ScalarVolume, percentile: float = 0.75) -> Tuple[int, int]:
    """Mean (x, y) of voxels strictly brighter than the given percentile.

    Coordinates are rounded half up to whole voxels.  If no voxel exceeds the
    threshold (e.g. a constant volume) the geometric center ``(nx//2, ny//2)``
    is returned.
    """
    t = nearest_rank_percentile(volume.data, percentile)
    xs, ys, _ = np.nonzero(volume.data > t)
    if xs.size == 0:
        nx, ny, _ = volume.dims
        return nx // 2, ny // 2
    return int(math.floor(xs.mean() + 0.5)), int(math.floor(ys.mean() + 0.5))


# ----------------------------------------------------------------------------
# cropping

def crop_offset(center: Tuple[int, int], size: int) -> Tuple[int, int]:
    """Lower corner of the ``size``-square window centered on ``center``."""
    half = size // 2
    return int(center[0]) - half, int(center[1]) - half


def _paste(dst: np.ndarray, src: np.ndarray, ox: int, oy: int) -> None:
    """Copy ``src`` into ``dst`` so that src[i, j] lands at dst[i - ox, j - oy]."""
    nx, ny = src.shape[:2]
    mx, my = dst.shape[:2]
    x0, y0 = max(ox, 0), max(oy, 0)
    x1, y1 = min(ox + mx, nx), min(oy + my, ny)
    if x0 >= x1 or y0 >= y1:
        return
    dst[x0 - ox:x1 - ox, y0 - oy:y1 - oy] = src[x0:x1, y0:y1]


def crop_xy(volume: Volume, center: Tuple[int, int], size: int) -> Volume:
    """Cut a ``size`` x ``size`` window in the xy-plane, zero-padding outside.

    The window is ``[cx - size/2, cx + size/2)`` along x (likewise y).  The
    origin moves with the window so the crop stays in the same physical frame.
    """
    if size <= 0:
        raise ConfigError(f"crop size must be positive, got {size}")
    ox, oy = crop_offset(center, size)
    out = np.zeros((size, size, volume.dims[2]), dtype=volume.data.dtype)
    _paste(out, volume.data, ox, oy)
    sx, sy, _ = volume.spacing
    origin = (volume.origin[0] + ox * sx, volume.origin[1] + oy * sy, volume.origin[2])
    return type(volume)(out, volume.spacing, origin)


def uncrop_xy(volume: Volume, offset: Tuple[int, int], dims: Tuple[int, int, int]) -> Volume:
    """Place a cropped volume back into a zero volume of the pre-crop ``dims``."""
    if volume.dims[2] != dims[2]:
        raise ShapeError(f"z extent {volume.dims[2]} does not match target {dims[2]}")
    ox, oy = offset
    out = np.zeros(dims, dtype=volume.data.dtype)
    _paste(out, volume.data, -ox, -oy)
    sx, sy, _ = volume.spacing
    origin = (volume.origin[0] - ox * sx, volume.origin[1] - oy * sy, volume.origin[2])
    return type(volume)(out, volume.spacing, origin)


# ----------------------------------------------------------------------------
# slicing

@dataclass(frozen=True, eq=False)
class SliceStack:
    """Ordered xy-slices of one cropped volume plus what is needed to rebuild it.

    ``source_dims`` are the dims before cropping and ``crop_offset`` the lower
    window corner in that grid; ``spacing``/``origin`` describe the cropped
    volume itself.
    """

    slices: List[np.ndarray]
    spacing: Vec3
    origin: Vec3
    crop_offset: Tuple[int, int] = (0, 0)
    source_dims: Optional[Tuple[int, int, int]] = None
    kind: str = "scalar"
    case_id: str = ""

    @property
    def n(self) -> int:
        return len(self.slices)

    @property
    def slice_dims(self) -> Tuple[int, int]:
        return tuple(self.slices[0].shape) if self.slices else (0, 0)  # type: ignore[return-value]

    def metadata(self) -> dict:
        return {
            "case_id": self.case_id,
            "kind": self.kind,
            "n": self.n,
            "slice_dims": list(self.slice_dims),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "crop_offset": list(self.crop_offset),
            "source_dims": list(self.source_dims) if self.source_dims is not None else None,
        }

    def with_slices(self, slices: List[np.ndarray]) -> "SliceStack":
        return SliceStack(slices, self.spacing, self.origin, self.crop_offset,
                          self.source_dims, self.kind, self.case_id)


def slice_z(
    volume: Volume,
    crop_offset: Tuple[int, int] = (0, 0),
    source_dims: Optional[Tuple[int, int, int]] = None,
    case_id: str = "",
) -> SliceStack:
    kind = "label" if isinstance(volume, LabelVolume) else "scalar"
    slices = [np.array(volume.data[:, :, k]) for k in range(volume.dims[2])]
    return SliceStack(
        slices=slices,
        spacing=volume.spacing,
        origin=volume.origin,
        crop_offset=tuple(int(c) for c in crop_offset),
        source_dims=tuple(source_dims) if source_dims is not None else volume.dims,
        kind=kind,
        case_id=case_id,
    )


def stack_z(stack: SliceStack) -> Volume:
    """Rebuild the volume from its slices; geometry comes from the stack metadata."""
    if stack.n < 1:
        raise ShapeError("cannot stack an empty slice list")
    first = np.asarray(stack.slices[0]).shape
    for k, s in enumerate(stack.slices):
        if np.ndim(s) != 2 or np.shape(s) != first:
            raise ShapeError(f"slice {k} has shape {np.shape(s)}, expected {first}")
    data = np.stack([np.asarray(s) for s in stack.slices], axis=2)
    cls = LabelVolume if stack.kind == "label" else ScalarVolume
    return cls(data, stack.spacing, stack.origin)


# ----------------------------------------------------------------------------
# whole case

@dataclass(frozen=True, eq=False)
class PreprocessedCase:
    stack: SliceStack
    image: ScalarVolume
    labels: Optional[LabelVolume] = None
    center: Tuple[int, int] = (0, 0)
    resampled_dims: Tuple[int, int, int] = field(default=(0, 0, 0))


def resample_labels(labels: LabelVolume, config: PipelineConfig) -> LabelVolume:
    if config.label_interpolation == "onehot_linear":
        return resample_labels_onehot(labels, config.target_spacing)
    return resample(labels, config.target_spacing, "nearest")


def preprocess_case(
    image: ScalarVolume,
    labels: Optional[LabelVolume] = None,
    config: PipelineConfig = PipelineConfig(),
    case_id: str = "",
) -> PreprocessedCase:
    """Run the full chain on one case.

    The label map (if any) goes through the same resampling grid and the same
    crop window as the image, so voxel (i, j, k) of both outputs refers to the
    same physical location.
    """
    if labels is not None:
        require_same_dims(image, labels, "image and labels")
        if not spacing_close(image.spacing, labels.spacing):
            raise ShapeError(f"image and labels differ in spacing: {image.spacing} vs {labels.spacing}")
    res = resample(image, config.target_spacing, "trilinear")
    norm = normalize_intensity(res)
    center = compute_center_axis(norm, config.percentile)
    cropped = crop_xy(norm, center, config.crop_size)
    offset = crop_offset(center, config.crop_size)
    stack = slice_z(cropped, offset, res.dims, case_id)
    out_labels = None
    if labels is not None:
        out_labels = crop_xy(resample_labels(labels, config), center, config.crop_size)
    return PreprocessedCase(stack, cropped, out_labels, center, res.dims)
