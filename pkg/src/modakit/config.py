"""Run configuration and output provenance."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Union

from .augment import AugmentSpec
from .errors import ConfigError
from .pipeline import PipelineConfig
from .slice_io import FORMATS

ENV_OUT = "MODAKIT_OUT"
ENV_JOBS = "MODAKIT_JOBS"

CONFIG_NAME = "run_config.json"
PROVENANCE_NAME = "provenance.json"


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    seed: int = 0
    k: int = 5
    slice_format: str = "raw_f32"
    out_dir: Optional[str] = None
    jobs: int = 1

    def __post_init__(self):
        if self.slice_format not in FORMATS:
            raise ConfigError(f"slice_format must be one of {sorted(FORMATS)}, got {self.slice_format!r}")
        if int(self.jobs) < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if int(self.k) < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")

    def provenance_dict(self) -> dict:
        """Settings that determine output content (not where or how fast it is written)."""
        return {
            "pipeline": self.pipeline.to_dict(),
            "augment": self.augment.to_dict(),
            "seed": int(self.seed),
            "k": int(self.k),
            "slice_format": self.slice_format,
        }

    def digest(self) -> str:
        blob = json.dumps(self.provenance_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def config_from_dict(obj: dict) -> RunConfig:
    try:
        pipe = obj.get("pipeline", {})
        aug = obj.get("augment", {})
        return RunConfig(
            pipeline=PipelineConfig(**pipe),
            augment=AugmentSpec(**aug),
            seed=int(obj.get("seed", 0)),
            k=int(obj.get("k", 5)),
            slice_format=obj.get("slice_format", "raw_f32"),
            out_dir=obj.get("out_dir"),
            jobs=int(obj.get("jobs", 1)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid run config: {exc}") from None


def load_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(obj)


def apply_overrides(cfg: RunConfig, **flags) -> RunConfig:
    """Layer environment variables, then explicit flags (non-None), over ``cfg``."""
    changes = {}
    if os.environ.get(ENV_OUT):
        changes["out_dir"] = os.environ[ENV_OUT]
    if os.environ.get(ENV_JOBS):
        try:
            changes["jobs"] = int(os.environ[ENV_JOBS])
        except ValueError:
            raise ConfigError(f"{ENV_JOBS} must be an integer, got {os.environ[ENV_JOBS]!r}") from None
    aug = {}
    for key, value in flags.items():
        if value is None:
            continue
        if key == "factor":
            aug["intensity_factor"] = value
        elif key == "label":
            aug["target_label"] = value
        else:
            changes[key] = value
    if aug:
        changes["augment"] = replace(cfg.augment, **aug)
    return replace(cfg, **changes)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_provenance(out_dir: Union[str, Path], cfg: RunConfig, outputs: List[Path]) -> None:
    """Persist the config next to the outputs together with a hash of each output file."""
    out_dir = Path(out_dir)
    (out_dir / CONFIG_NAME).write_text(json.dumps(cfg.provenance_dict(), indent=2, sort_keys=True) + "\n")
    files = {Path(p).resolve().relative_to(out_dir.resolve()).as_posix(): _sha256(Path(p))
             for p in sorted(outputs)}
    record = {"config_sha256": cfg.digest(), "outputs": dict(sorted(files.items()))}
    (out_dir / PROVENANCE_NAME).write_text(json.dumps(record, indent=2) + "\n")


def check_provenance(out_dir: Union[str, Path], cfg: Optional[RunConfig] = None) -> List[str]:
    """Return a list of problems (empty when outputs match the recorded config).

    When ``cfg`` is given it must also match the recorded config.
    """
    out_dir = Path(out_dir)
    problems = []
    try:
        recorded = config_from_dict(json.loads((out_dir / CONFIG_NAME).read_text()))
        record = json.loads((out_dir / PROVENANCE_NAME).read_text())
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        return [f"cannot read provenance: {exc}"]
    if recorded.digest() != record.get("config_sha256"):
        problems.append("run_config.json does not match the recorded config hash")
    if cfg is not None and cfg.digest() != record.get("config_sha256"):
        problems.append("outputs were produced with a different config")
    for rel, digest in record.get("outputs", {}).items():
        p = out_dir / rel
        if not p.exists():
            problems.append(f"missing output {rel}")
        elif _sha256(p) != digest:
            problems.append(f"output {rel} was modified")
    return problems
