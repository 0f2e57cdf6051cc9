"""Cross-validation folds and softmax-averaging ensembles.

Fold assignment is reproducible without numpy's generators: ids are sorted,
shuffled with Fisher-Yates driven by SplitMix64, and dealt round-robin::

    state = seed mod 2**64
    next():  state += 0x9E3779B97F4A7C15
             z = state
             z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
             return z ^ (z >> 31)                  (all arithmetic mod 2**64)
    for i = n-1 down to 1:  j = next() mod (i + 1);  swap(ids[i], ids[j])
    fold(ids[i]) = i mod k
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DataError, FormatError, ShapeError
from .nifti import read_nifti, write_nifti
from .volume import LabelVolume, ScalarVolume, Vec3, as_triplet

SIMPLEX_TOL = 1e-5
_MASK64 = (1 << 64) - 1


def splitmix64(seed: int):
    state = seed & _MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    folds: Dict[str, int]

    def members(self, fold: int) -> List[str]:
        return sorted(cid for cid, f in self.folds.items() if f == fold)

    def sizes(self) -> List[int]:
        return [len(self.members(f)) for f in range(self.k)]

    def train_val(self, fold: int) -> Tuple[List[str], List[str]]:
        val = self.members(fold)
        train = sorted(cid for cid, f in self.folds.items() if f != fold)
        return train, val

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "folds": [{"fold": f, "val": self.members(f)} for f in range(self.k)],
            "assignment": dict(sorted(self.folds.items())),
        }


def kfold_split(case_ids: Iterable[str], k: int = 5, seed: int = 0) -> FoldAssignment:
    ids = sorted(str(c) for c in case_ids)
    if len(set(ids)) != len(ids):
        raise ConfigError("case ids must be unique")
    if k < 2:
        raise ConfigError(f"k must be at least 2, got {k}")
    if k > len(ids):
        raise ConfigError(f"k={k} exceeds the number of cases ({len(ids)})")
    rng = splitmix64(seed)
    for i in range(len(ids) - 1, 0, -1):
        j = next(rng) % (i + 1)
        ids[i], ids[j] = ids[j], ids[i]
    return FoldAssignment(k, {cid: i % k for i, cid in enumerate(ids)})


@dataclass(frozen=True, eq=False)
class ProbabilityVolume:
    """Per-class probabilities, ``data[c, x, y, z]``; channel ``c`` belongs to ``labels[c]``."""

    data: np.ndarray
    spacing: Vec3
    origin: Vec3 = (0.0, 0.0, 0.0)
    labels: Tuple[int, ...] = ()

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ShapeError(f"probability data must be C x nx x ny x nz, got {data.shape}")
        labels = tuple(int(v) for v in self.labels) or tuple(range(data.shape[0]))
        if len(labels) != data.shape[0]:
            raise ShapeError(f"{len(labels)} labels for {data.shape[0]} channels")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise DataError("probabilities must lie in [0, 1]")
        dev = np.abs(data.sum(axis=0) - 1.0).max()
        if dev > SIMPLEX_TOL:
            raise DataError(f"channel sums deviate from 1 by {dev:.3g}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "spacing", as_triplet(self.spacing, "spacing"))
        object.__setattr__(self, "origin", as_triplet(self.origin, "origin"))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape[1:])  # type: ignore[return-value]


def average_probs(members: Sequence[ProbabilityVolume]) -> ProbabilityVolume:
    if not members:
        raise ValueError("need at least one ensemble member")
    first = members[0]
    for i, m in enumerate(members[1:], start=1):
        if m.data.shape != first.data.shape:
            raise ShapeError(f"member {i} has shape {m.data.shape}, expected {first.data.shape}")
        if m.labels != first.labels:
            raise ShapeError(f"member {i} has channel labels {m.labels}, expected {first.labels}")
    # sorting before summing makes the result bit-identical under member reordering
    stacked = np.sort(np.stack([m.data for m in members]), axis=0)
    mean = np.clip(stacked.sum(axis=0) / len(members), 0.0, 1.0)
    return ProbabilityVolume(mean, first.spacing, first.origin, first.labels)


def argmax_labels(probs: ProbabilityVolume) -> LabelVolume:
    """Most probable channel per voxel; ties go to the lowest channel index."""
    idx = np.argmax(probs.data, axis=0)
    lut = np.asarray(probs.labels, dtype=np.int64)
    return LabelVolume(lut[idx], probs.spacing, probs.origin)


# ----------------------------------------------------------------------------
# on-disk format: one float32 NIfTI per channel + JSON sidecar

def write_probs(probs: ProbabilityVolume, sidecar: Union[str, Path]) -> Path:
    sidecar = Path(sidecar)
    sidecar.parent.mkdir(parents=True, exist_ok=True)
    stem = sidecar.name[: -len(".json")] if sidecar.name.endswith(".json") else sidecar.name
    channels = []
    for c, lab in enumerate(probs.labels):
        name = f"{stem}_c{lab}.nii.gz"
        write_nifti(ScalarVolume(probs.data[c], probs.spacing, probs.origin), sidecar.parent / name)
        channels.append({"label": lab, "path": name})
    meta = {
        "channels": channels,
        "dims": list(probs.dims),
        "spacing": list(probs.spacing),
        "origin": list(probs.origin),
    }
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    return sidecar


def read_probs(sidecar: Union[str, Path]) -> ProbabilityVolume:
    sidecar = Path(sidecar)
    try:
        meta = json.loads(sidecar.read_text())
        channels = meta["channels"]
        dims = tuple(int(d) for d in meta["dims"])
        spacing = tuple(meta["spacing"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{sidecar}: invalid probability sidecar ({exc})") from None
    if not channels:
        raise FormatError(f"{sidecar}: no channels listed")
    arrays, labels = [], []
    for ch in channels:
        path = Path(ch["path"])
        vol = read_nifti(path if path.is_absolute() else sidecar.parent / path, "scalar")
        if vol.dims != dims:
            raise ShapeError(f"{path}: dims {vol.dims} differ from sidecar {dims}")
        arrays.append(vol.data)
        labels.append(int(ch["label"]))
    origin = tuple(meta.get("origin", vol.origin))
    return ProbabilityVolume(np.stack(arrays), spacing, origin, tuple(labels))
