"""On-disk slice exports exchanged with the external 2D translation model.

Layout of one case directory::

    <case_dir>/slices.json          sidecar (geometry + ordered slice list)
    <case_dir>/slices/slice_0000.f32
    ...

``.f32`` files hold ``nx * ny`` little-endian float32 values with x varying
fastest.  In ``png16`` mode each slice is a 16-bit grayscale PNG (rows = y,
columns = x) with intensities quantized from [0, 1] to [0, 65535].
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import FormatError
from .pipeline import SliceStack

SIDECAR_NAME = "slices.json"
SLICE_SUBDIR = "slices"
FORMATS = {"raw_f32": ".f32", "png16": ".png"}
PNG_MAX = 65535


def slice_filename(index: int, fmt: str = "raw_f32") -> str:
    return f"slice_{index:04d}{FORMATS[fmt]}"


def _write_raw(path: Path, img: np.ndarray) -> None:
    path.write_bytes(np.asarray(img, dtype="<f4").tobytes(order="F"))


def _read_raw(path: Path, dims) -> np.ndarray:
    raw = path.read_bytes()
    expected = dims[0] * dims[1] * 4
    if len(raw) != expected:
        raise FormatError(f"{path.name}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(dims, order="F").astype(np.float64)


def _write_png(path: Path, img: np.ndarray) -> None:
    from PIL import Image

    q = np.floor(np.clip(img, 0.0, 1.0) * PNG_MAX + 0.5).astype(np.uint16)
    Image.fromarray(np.ascontiguousarray(q.T)).save(path, format="PNG")


def _read_png(path: Path, dims) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.array(im)
    if arr.ndim != 2:
        raise FormatError(f"{path.name}: expected a single-channel image, got shape {arr.shape}")
    arr = arr.T
    if arr.shape != tuple(dims):
        raise FormatError(f"{path.name}: slice dims {arr.shape} differ from sidecar {tuple(dims)}")
    return arr.astype(np.float64) / PNG_MAX


def write_slices(stack: SliceStack, case_dir: Union[str, Path], fmt: str = "raw_f32") -> Path:
    """Export ``stack`` into ``case_dir``; returns the sidecar path."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown slice format {fmt!r}; choose from {sorted(FORMATS)}")
    case_dir = Path(case_dir)
    (case_dir / SLICE_SUBDIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for k, img in enumerate(stack.slices):
        name = slice_filename(k, fmt)
        target = case_dir / SLICE_SUBDIR / name
        if fmt == "raw_f32":
            _write_raw(target, img)
        else:
            _write_png(target, img)
        entries.append({"index": k, "file": f"{SLICE_SUBDIR}/{name}"})
    meta = stack.metadata()
    meta["format"] = fmt
    meta["slices"] = entries
    sidecar = case_dir / SIDECAR_NAME
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    return sidecar


def read_sidecar(path: Union[str, Path]) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / SIDECAR_NAME
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("n", "slice_dims", "spacing", "origin", "slices"):
        if key not in meta:
            raise FormatError(f"{path}: sidecar lacks '{key}'")
    return meta


def read_slices(
    sidecar: Union[str, Path],
    slice_root: Optional[Union[str, Path]] = None,
    fmt: Optional[str] = None,
) -> SliceStack:
    """Load a slice export.

    ``slice_root`` lets the slices come from a different directory than the
    sidecar (e.g. a translator's output folder mirroring the export layout).
    ``fmt`` overrides the sidecar's format when the translator changed it; the
    file extension of each entry is swapped accordingly.
    """
    sidecar = Path(sidecar)
    if sidecar.is_dir():
        sidecar = sidecar / SIDECAR_NAME
    meta = read_sidecar(sidecar)
    root = Path(slice_root) if slice_root is not None else sidecar.parent
    fmt = fmt or meta.get("format", "raw_f32")
    if fmt not in FORMATS:
        raise FormatError(f"{sidecar}: unknown slice format {fmt!r}")

    n = int(meta["n"])
    entries = sorted(meta["slices"], key=lambda e: int(e["index"]))
    indices = [int(e["index"]) for e in entries]
    missing = sorted(set(range(n)) - set(indices))
    if missing:
        raise FormatError(f"{sidecar}: slice indices {missing} missing from the sidecar list")
    if indices != list(range(n)):
        raise FormatError(f"{sidecar}: slice indices {indices} are not exactly 0..{n - 1}")

    dims = tuple(int(d) for d in meta["slice_dims"])
    slices = []
    for e in entries:
        path = root / str(Path(e["file"]).with_suffix(FORMATS[fmt]))
        if not path.exists():
            raise FormatError(f"slice {e['index']} not found: {path}")
        slices.append(_read_raw(path, dims) if fmt == "raw_f32" else _read_png(path, dims))

    source_dims = meta.get("source_dims")
    return SliceStack(
        slices=slices,
        spacing=tuple(meta["spacing"]),
        origin=tuple(meta["origin"]),
        crop_offset=tuple(meta.get("crop_offset", (0, 0))),
        source_dims=tuple(source_dims) if source_dims else None,
        kind=meta.get("kind", "scalar"),
        case_id=meta.get("case_id", ""),
    )
