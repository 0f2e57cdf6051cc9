"""Fréchet distance between Gaussian summaries of feature sets.

    d = ||mu_a - mu_b||^2 + Tr(S_a) + Tr(S_b) - 2 Tr((S_a S_b)^(1/2))

The cross term is evaluated through the symmetric matrix ``A S_b A`` with
``A = S_a^(1/2)``, which has the same eigenvalues as ``S_a S_b`` but can be
handled with a symmetric eigensolver.  Feature extraction is not done here;
features arrive precomputed from files.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DataError, InsufficientSamplesError, InvalidCovarianceError, ParseError, ShapeError

SYMMETRY_TOL = 1e-10
NEG_EIG_REL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        d = mu.shape[0]
        if mu.ndim != 1 or sigma.shape != (d, d):
            raise ShapeError(f"mu {mu.shape} and sigma {sigma.shape} are inconsistent")
        scale = max(1.0, float(np.abs(sigma).max()) if sigma.size else 1.0)
        if np.abs(sigma - sigma.T).max(initial=0.0) > SYMMETRY_TOL * scale:
            raise InvalidCovarianceError("covariance is not symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))

    @property
    def d(self) -> int:
        return self.mu.shape[0]


def summarize(features: np.ndarray) -> GaussianSummary:
    """Column means and unbiased (n-1) covariance of an ``n x d`` feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeError(f"features must be an n x d matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise DataError("features contain non-finite values")
    mu = x.mean(axis=0)
    centered = x - mu
    sigma = centered.T @ centered / (x.shape[0] - 1)
    return GaussianSummary(mu, sigma)


def _checked_eigh(sigma: np.ndarray, name: str):
    w, v = np.linalg.eigh(sigma)
    top = float(np.abs(w).max(initial=0.0))
    if w.size and w.min() < -NEG_EIG_REL_TOL * top:
        raise InvalidCovarianceError(f"{name} has eigenvalue {w.min():.3g} (max |eig| {top:.3g})")
    return np.clip(w, 0.0, None), v


def psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    """Spectral square root of a symmetric PSD matrix (round-off negatives clamped)."""
    w, v = _checked_eigh(sigma, "matrix")
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    if a.d != b.d:
        raise ShapeError(f"feature dimensions differ: {a.d} vs {b.d}")
    _checked_eigh(b.sigma, "second covariance")
    root_a = psd_sqrt(a.sigma)
    m = root_a @ b.sigma @ root_a
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    cross = float(np.sqrt(np.clip(w, 0.0, None)).sum())
    diff = a.mu - b.mu
    value = float(diff @ diff) + float(np.trace(a.sigma)) + float(np.trace(b.sigma)) - 2.0 * cross
    return max(value, 0.0)


# ----------------------------------------------------------------------------
# feature files

def _read_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if not rows and lineno == 1:
                    continue  # header
                raise ParseError(f"{path.name}: non-numeric value", line=lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"{path.name}: expected {width} columns, got {len(vals)}", line=lineno)
            if not all(np.isfinite(vals)):
                raise ParseError(f"{path.name}: non-finite value", line=lineno)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path.name}: no feature rows")
    return np.asarray(rows, dtype=np.float64)


def _sidecar_for(path: Path) -> Path:
    for cand in (path.with_name(path.name + ".json"), path.with_suffix(".json")):
        if cand.exists():
            return cand
    raise ParseError(f"{path.name}: raw feature file needs a JSON sidecar ({path.name}.json)")


def _read_raw(path: Path) -> np.ndarray:
    side = _sidecar_for(path)
    try:
        meta = json.loads(side.read_text())
        n, d = int(meta["n"]), int(meta["d"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{side.name}: invalid sidecar ({exc})") from None
    raw = path.read_bytes()
    need = n * d * 4
    if len(raw) != need:
        raise ParseError(f"{path.name}: expected {need} bytes for n={n}, d={d}, got {len(raw)}",
                         offset=min(len(raw), need))
    x = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, d)
    bad = np.flatnonzero(~np.isfinite(x.ravel()))
    if bad.size:
        raise ParseError(f"{path.name}: non-finite value", offset=int(bad[0]) * 4)
    return x


def read_features(path: Union[str, Path]) -> np.ndarray:
    """Load an ``n x d`` feature matrix from ``.csv`` or raw float32 (``.f32``/``.bin``/``.raw``)."""
    path = Path(path)
    if path.suffix.lower() in (".csv", ".txt"):
        return _read_csv(path)
    if path.suffix.lower() in (".f32", ".bin", ".raw"):
        return _read_raw(path)
    raise ParseError(f"{path.name}: unrecognized feature file extension {path.suffix!r}")


def write_features(x: np.ndarray, path: Union[str, Path]) -> None:
    path = Path(path)
    x = np.atleast_2d(np.asarray(x))
    if path.suffix.lower() == ".csv":
        buf = io.StringIO()
        np.savetxt(buf, x, delimiter=",", fmt="%.17g")
        path.write_text(buf.getvalue())
    else:
        path.write_bytes(x.astype("<f4").tobytes())
        path.with_name(path.name + ".json").write_text(json.dumps({"n": x.shape[0], "d": x.shape[1]}))


def fid_between_files(path_a: Union[str, Path], path_b: Union[str, Path]) -> float:
    return frechet_distance(summarize(read_features(path_a)), summarize(read_features(path_b)))
