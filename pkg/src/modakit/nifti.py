"""Single-file NIfTI-1 reader and writer.

Only the three datatypes needed for MR intensities and label maps are
handled: unsigned 8-bit, signed 16-bit and 32-bit float.  Orientation fields
(qform/sform) are carried through verbatim but never interpreted; geometry is
taken from ``pixdim`` and the origin from the qform (or sform) offset.
"""
from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Literal, Sequence, Union

import numpy as np

from .errors import DataError, FormatError, ShapeError, UnsupportedError
from .volume import DEFAULT_LABELS, LabelVolume, ScalarVolume

HEADER_SIZE = 348
MAGIC = b"n+1\x00"
GZIP_MAGIC = b"\x1f\x8b"

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

_DTYPES = {
    DT_UINT8: (np.dtype("u1"), 8),
    DT_INT16: (np.dtype("i2"), 16),
    DT_FLOAT32: (np.dtype("f4"), 32),
}
_DTYPE_BY_NAME = {"uint8": DT_UINT8, "int16": DT_INT16, "float32": DT_FLOAT32}

# (name, struct code) in file order; 348 bytes in total.
_FIELDS = [
    ("sizeof_hdr", "i"),
    ("data_type", "10s"),
    ("db_name", "18s"),
    ("extents", "i"),
    ("session_error", "h"),
    ("regular", "1s"),
    ("dim_info", "B"),
    ("dim", "8h"),
    ("intent_p1", "f"),
    ("intent_p2", "f"),
    ("intent_p3", "f"),
    ("intent_code", "h"),
    ("datatype", "h"),
    ("bitpix", "h"),
    ("slice_start", "h"),
    ("pixdim", "8f"),
    ("vox_offset", "f"),
    ("scl_slope", "f"),
    ("scl_inter", "f"),
    ("slice_end", "h"),
    ("slice_code", "B"),
    ("xyzt_units", "B"),
    ("cal_max", "f"),
    ("cal_min", "f"),
    ("slice_duration", "f"),
    ("toffset", "f"),
    ("glmax", "i"),
    ("glmin", "i"),
    ("descrip", "80s"),
    ("aux_file", "24s"),
    ("qform_code", "h"),
    ("sform_code", "h"),
    ("quatern_b", "f"),
    ("quatern_c", "f"),
    ("quatern_d", "f"),
    ("qoffset_x", "f"),
    ("qoffset_y", "f"),
    ("qoffset_z", "f"),
    ("srow_x", "4f"),
    ("srow_y", "4f"),
    ("srow_z", "4f"),
    ("intent_name", "16s"),
    ("magic", "4s"),
]
_FORMAT = "".join(code for _, code in _FIELDS)
assert struct.calcsize("<" + _FORMAT) == HEADER_SIZE

# Fields the reader interprets; everything else travels in NiftiHeader.extra.
_OWNED = ("dim", "datatype", "pixdim", "scl_slope", "scl_inter", "vox_offset", "magic")


def _count(code: str) -> int:
    digits = code[:-1]
    return int(digits) if digits and code[-1] != "s" else 1


def _unpack(raw: bytes, endian: str) -> Dict[str, Any]:
    flat = struct.unpack(endian + _FORMAT, raw[:HEADER_SIZE])
    out: Dict[str, Any] = {}
    i = 0
    for name, code in _FIELDS:
        n = _count(code)
        out[name] = tuple(flat[i:i + n]) if n > 1 else flat[i]
        i += n
    return out


def _pack(values: Dict[str, Any]) -> bytes:
    flat = []
    for name, code in _FIELDS:
        v = values[name]
        if _count(code) > 1:
            flat.extend(v)
        else:
            flat.append(v)
    return struct.pack("<" + _FORMAT, *flat)


def _default_extra() -> Dict[str, Any]:
    extra: Dict[str, Any] = {}
    for name, code in _FIELDS:
        if name in _OWNED:
            continue
        n = _count(code)
        if code.endswith("s"):
            extra[name] = b""
        elif code[-1] == "f":
            extra[name] = (0.0,) * n if n > 1 else 0.0
        else:
            extra[name] = (0,) * n if n > 1 else 0
    extra["sizeof_hdr"] = HEADER_SIZE
    extra["regular"] = b"r"
    extra["xyzt_units"] = 2  # mm
    extra["qform_code"] = 1
    extra["sform_code"] = 1
    return extra


@dataclass(frozen=True)
class NiftiHeader:
    """Parsed NIfTI-1 header.

    The interpreted fields are attributes; every other field of the 348-byte
    header is kept in ``extra`` (already converted to native values) and is
    written back unchanged.
    """

    dim: tuple
    datatype: int
    pixdim: tuple
    scl_slope: float
    scl_inter: float
    vox_offset: float
    magic: bytes
    extra: Dict[str, Any] = field(default_factory=_default_extra, compare=False)

    @property
    def dims(self) -> tuple:
        ndim = max(1, min(int(self.dim[0]), 3))
        shape = list(self.dim[1:ndim + 1]) + [1] * (3 - ndim)
        return tuple(int(n) for n in shape)

    @property
    def spacing(self) -> tuple:
        return tuple(float(p) for p in self.pixdim[1:4])

    @property
    def origin(self) -> tuple:
        x = self.extra
        if x.get("qform_code", 0) > 0:
            return (x["qoffset_x"], x["qoffset_y"], x["qoffset_z"])
        if x.get("sform_code", 0) > 0:
            return (x["srow_x"][3], x["srow_y"][3], x["srow_z"][3])
        return (0.0, 0.0, 0.0)

    @property
    def descrip(self) -> str:
        return self.extra.get("descrip", b"").split(b"\x00", 1)[0].decode("latin-1")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "NiftiHeader":
        if len(raw) < HEADER_SIZE:
            raise FormatError(f"header truncated: {len(raw)} < {HEADER_SIZE} bytes")
        endian = _detect_endian(raw)
        values = _unpack(raw, endian)
        if values["sizeof_hdr"] != HEADER_SIZE:
            raise FormatError(f"sizeof_hdr is {values['sizeof_hdr']}, expected {HEADER_SIZE}")
        if values["magic"] != MAGIC:
            raise FormatError(f"bad magic {values['magic']!r}; only single-file NIfTI-1 is supported")
        owned = {k: values.pop(k) for k in _OWNED}
        return cls(extra=values, **owned)

    def to_bytes(self) -> bytes:
        values = dict(self.extra)
        values.update(
            sizeof_hdr=HEADER_SIZE,
            dim=tuple(self.dim),
            datatype=self.datatype,
            bitpix=_DTYPES[self.datatype][1] if self.datatype in _DTYPES else values.get("bitpix", 0),
            pixdim=tuple(self.pixdim),
            scl_slope=self.scl_slope,
            scl_inter=self.scl_inter,
            vox_offset=self.vox_offset,
            magic=self.magic,
        )
        return _pack(values)


def _detect_endian(raw: bytes) -> str:
    # dim[0] must be in 1..7; a byte-swapped value falls far outside.
    for endian in ("<", ">"):
        (ndim,) = struct.unpack_from(endian + "h", raw, 40)
        if 1 <= ndim <= 7:
            return endian
    raise FormatError("cannot determine byte order: dim[0] outside 1..7 in both orders")


def _load_bytes(path: Union[str, Path]) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FormatError(f"corrupt gzip stream in {path}: {exc}") from exc
    return raw


def read_header(path: Union[str, Path]) -> NiftiHeader:
    return NiftiHeader.from_bytes(_load_bytes(path))


def read_nifti(
    path: Union[str, Path],
    kind: Literal["scalar", "label"] = "scalar",
    labels: Sequence[int] | None = DEFAULT_LABELS,
) -> Union[ScalarVolume, LabelVolume]:
    """Read a ``.nii`` / ``.nii.gz`` file into a volume.

    Parameters
    ----------
    path : file path; gzip compression is detected from the content.
    kind : ``"scalar"`` for intensities, ``"label"`` for class maps.
    labels : allowed label values when ``kind == "label"``; ``None`` skips the check.
    """
    raw = _load_bytes(path)
    hdr = NiftiHeader.from_bytes(raw)
    endian = _detect_endian(raw)

    if hdr.datatype not in _DTYPES:
        raise UnsupportedError(f"datatype code {hdr.datatype} is not supported")
    ndim = int(hdr.dim[0])
    if ndim > 3 and any(int(n) != 1 for n in hdr.dim[4:ndim + 1]):
        raise UnsupportedError(f"only 3D images are supported, dim={hdr.dim[:ndim + 1]}")
    dims = hdr.dims
    if min(dims) < 1:
        raise FormatError(f"non-positive image dims {dims}")
    spacing = hdr.spacing
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise FormatError(f"pixdim spacing must be positive and finite, got {spacing}")

    dtype = _DTYPES[hdr.datatype][0].newbyteorder(endian)
    count = int(np.prod(dims))
    offset = int(hdr.vox_offset)
    if offset < HEADER_SIZE:
        raise FormatError(f"vox_offset {hdr.vox_offset} lies inside the header")
    nbytes = count * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise FormatError(f"image data truncated: need {offset + nbytes} bytes, have {len(raw)}")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = flat.reshape(dims, order="F")

    slope, inter = float(hdr.scl_slope), float(hdr.scl_inter)
    scaled = np.isfinite(slope) and slope != 0 and not (slope == 1 and inter == 0)
    if scaled:
        data = data.astype(np.float64) * slope + inter
    if data.dtype.kind == "f" and not np.all(np.isfinite(data)):
        raise DataError(f"non-finite voxel values in {path}")

    origin = hdr.origin
    if kind == "scalar":
        return ScalarVolume(data, spacing, origin, header=hdr)
    if kind != "label":
        raise ValueError(f"kind must be 'scalar' or 'label', got {kind!r}")
    if data.dtype.kind == "f" and not np.all(data == np.round(data)):
        raise DataError(f"label data in {path} is not integer-valued")
    vol = LabelVolume(data, spacing, origin, header=hdr)
    if labels is not None:
        vol.check_labels(labels)
    return vol


def _encode(volume, datatype: int) -> np.ndarray:
    data = volume.data
    if datatype == DT_FLOAT32:
        out = data.astype("<f4")
        if not np.all(np.isfinite(out)):
            raise DataError("values overflow float32")
        return out
    info = np.iinfo(_DTYPES[datatype][0])
    if not np.all(data == np.round(data)):
        raise DataError(f"{_DTYPES[datatype][0]} output requires integer-valued data")
    if data.min() < info.min or data.max() > info.max:
        raise DataError(f"values outside [{info.min}, {info.max}] for {_DTYPES[datatype][0]}")
    return data.astype(_DTYPES[datatype][0].newbyteorder("<"))


def write_nifti(
    volume: Union[ScalarVolume, LabelVolume],
    path: Union[str, Path],
    dtype: str | None = None,
    descrip: str | None = None,
) -> None:
    """Write ``volume`` as single-file NIfTI-1 (gzip if ``path`` ends in ``.gz``).

    Scalar volumes default to float32 and label volumes to uint8; ``dtype``
    (``"uint8"``, ``"int16"`` or ``"float32"``) overrides that when the values
    fit exactly.  The gzip stream carries no timestamp so output bytes are
    reproducible.
    """
    if not isinstance(volume, (ScalarVolume, LabelVolume)):
        raise TypeError(f"expected ScalarVolume or LabelVolume, got {type(volume).__name__}")
    if min(volume.dims) < 1:
        raise ShapeError(f"cannot write volume with dims {volume.dims}")
    if dtype is None:
        datatype = DT_UINT8 if isinstance(volume, LabelVolume) else DT_FLOAT32
    else:
        try:
            datatype = _DTYPE_BY_NAME[dtype]
        except KeyError:
            raise UnsupportedError(f"cannot write dtype {dtype!r}") from None
    body = _encode(volume, datatype)

    src = volume.header
    extra = dict(src.extra) if src is not None else _default_extra()
    ox, oy, oz = volume.origin
    extra["qoffset_x"], extra["qoffset_y"], extra["qoffset_z"] = ox, oy, oz
    if src is None:
        sx, sy, sz = volume.spacing
        extra["srow_x"] = (sx, 0.0, 0.0, ox)
        extra["srow_y"] = (0.0, sy, 0.0, oy)
        extra["srow_z"] = (0.0, 0.0, sz, oz)
    elif extra.get("sform_code", 0) > 0:
        extra["srow_x"] = tuple(extra["srow_x"][:3]) + (ox,)
        extra["srow_y"] = tuple(extra["srow_y"][:3]) + (oy,)
        extra["srow_z"] = tuple(extra["srow_z"][:3]) + (oz,)
    if descrip is not None:
        extra["descrip"] = descrip.encode("latin-1")[:79]
    # Integer range fields are meaningless for our outputs.
    extra["glmax"] = extra["glmin"] = 0

    qfac = src.pixdim[0] if src is not None and src.pixdim[0] in (-1.0, 1.0) else 1.0
    tail = tuple(src.pixdim[4:8]) if src is not None else (0.0, 0.0, 0.0, 0.0)
    hdr = NiftiHeader(
        dim=(3, *volume.dims, 1, 1, 1, 1),
        datatype=datatype,
        pixdim=(qfac, *volume.spacing, *tail),
        scl_slope=1.0,
        scl_inter=0.0,
        vox_offset=float(HEADER_SIZE + 4),
        magic=MAGIC,
        extra=extra,
    )
    buf = io.BytesIO()
    buf.write(hdr.to_bytes())
    buf.write(b"\x00\x00\x00\x00")  # no extensions
    buf.write(body.tobytes(order="F"))
    payload = buf.getvalue()

    path = Path(path)
    if path.name.endswith(".gz"):
        with open(path, "wb") as fh:
            with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)
