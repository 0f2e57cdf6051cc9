"""JSON dataset manifests.

::

    {
      "name": "crossmoda-train",
      "cases": [
        {"case_id": "ceT1_001", "image": "img/001.nii.gz", "label": "lab/001.nii.gz",
         "domain": "ceT1", "augmented": false},
        {"case_id": "hrT2_001", "image": "t2/001.nii.gz", "domain": "hrT2"}
      ]
    }

Relative paths are resolved against the manifest's own directory, and are
written relative to it again on save so a dataset folder can be moved.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Union

from .errors import ManifestError

DOMAINS = ("ceT1", "hrT2")


@dataclass(frozen=True)
class Case:
    case_id: str
    image: Path
    label: Optional[Path] = None
    domain: str = "ceT1"
    augmented: bool = False


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    cases: List[Case] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for c in self.cases:
            if not c.case_id:
                raise ManifestError("case_id must be non-empty")
            if c.case_id in seen:
                raise ManifestError(f"duplicate case_id {c.case_id!r}")
            seen.add(c.case_id)
            if c.domain not in DOMAINS:
                raise ManifestError(f"case {c.case_id!r}: domain must be one of {DOMAINS}, got {c.domain!r}")

    def __len__(self) -> int:
        return len(self.cases)

    def ids(self) -> List[str]:
        return [c.case_id for c in self.cases]

    def get(self, case_id: str) -> Case:
        for c in self.cases:
            if c.case_id == case_id:
                return c
        raise KeyError(case_id)

    def missing_files(self) -> List[str]:
        """Human-readable descriptions of referenced files that do not exist."""
        out = []
        for c in self.cases:
            if not Path(c.image).is_file():
                out.append(f"{c.case_id}: image {c.image}")
            if c.label is not None and not Path(c.label).is_file():
                out.append(f"{c.case_id}: label {c.label}")
        return out

    def validate_files(self) -> None:
        missing = self.missing_files()
        if missing:
            raise ManifestError("missing files: " + "; ".join(missing))

    def with_cases(self, cases: List[Case]) -> "DatasetManifest":
        return replace(self, cases=list(cases))


def _resolve(base: Path, p: Optional[str]) -> Optional[Path]:
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else base / p


def manifest_from_dict(obj: dict, base_dir: Union[str, Path] = ".") -> DatasetManifest:
    base = Path(base_dir)
    if not isinstance(obj, dict) or not isinstance(obj.get("cases", []), list):
        raise ManifestError("manifest must be an object with a 'cases' list")
    cases = []
    for i, raw in enumerate(obj.get("cases", [])):
        try:
            cases.append(Case(
                case_id=str(raw["case_id"]),
                image=_resolve(base, raw["image"]),
                label=_resolve(base, raw.get("label")),
                domain=raw.get("domain", "ceT1"),
                augmented=bool(raw.get("augmented", False)),
            ))
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"case #{i}: missing or invalid field {exc}") from None
    return DatasetManifest(name=str(obj.get("name", "")), cases=cases)


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    return manifest_from_dict(obj, path.parent)


def _rel(p: Path, base: Path) -> str:
    try:
        return Path(os.path.relpath(Path(p).resolve(), base.resolve())).as_posix()
    except ValueError:  # different drive
        return str(Path(p).resolve())


def manifest_to_dict(manifest: DatasetManifest, base_dir: Union[str, Path] = ".") -> dict:
    base = Path(base_dir)
    cases = []
    for c in manifest.cases:
        entry = {"case_id": c.case_id, "image": _rel(c.image, base)}
        if c.label is not None:
            entry["label"] = _rel(c.label, base)
        entry["domain"] = c.domain
        entry["augmented"] = c.augmented
        cases.append(entry)
    return {"name": manifest.name, "cases": cases}


def save_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest_to_dict(manifest, path.parent), indent=2) + "\n")
