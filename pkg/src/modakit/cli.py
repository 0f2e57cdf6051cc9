"""Command-line entry point: ``modakit <command> ...``.

Exit codes: 0 success, 1 some cases failed, 2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from functools import partial
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .augment import AT_SUFFIX, expand_dataset
from .config import RunConfig, apply_overrides, load_config, write_provenance
from .ensemble import argmax_labels, average_probs, kfold_split, read_probs, write_probs
from .errors import ModakitError
from .fid import frechet_distance, read_features, summarize
from .manifest import Case, DatasetManifest, load_manifest, save_manifest
from .metrics import aggregate, evaluate_case
from .nifti import read_nifti, write_nifti
from .parallel import map_cases
from .pipeline import preprocess_case, stack_z
from .slice_io import SIDECAR_NAME, read_sidecar, read_slices, write_slices

log = logging.getLogger("modakit")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

NIFTI_EXTS = (".nii.gz", ".nii")


def _dump(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
    return path


def _status(results, ids) -> dict:
    ok = [cid for cid, (good, _) in zip(ids, results) if good]
    failed = [{"case_id": cid, "error": r} for cid, (good, r) in zip(ids, results) if not good]
    return {"n_cases": len(ids), "succeeded": ok, "failed": failed}


def _finish(report: dict) -> int:
    for f in report["failed"]:
        log.error("case %s failed: %s", f["case_id"], f["error"])
    if report["failed"]:
        log.error("%d of %d cases failed", len(report["failed"]), report["n_cases"])
        return EXIT_PARTIAL
    return EXIT_OK


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out_dir:
        raise ModakitError("no output directory: pass --out or set MODAKIT_OUT")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# preprocess

def _preprocess_one(case: Case, cfg: RunConfig, out: Path) -> dict:
    image = read_nifti(case.image, "scalar")
    labels = read_nifti(case.label, "label", cfg.augment.label_set) if case.label is not None else None
    res = preprocess_case(image, labels, cfg.pipeline, case.case_id)
    case_dir = out / case.case_id
    write_slices(res.stack, case_dir, cfg.slice_format)
    write_nifti(res.image, case_dir / "image.nii.gz")
    if res.labels is not None:
        write_nifti(res.labels, case_dir / "label.nii.gz")
    return {
        "center": list(res.center),
        "resampled_dims": list(res.resampled_dims),
        "crop_offset": list(res.stack.crop_offset),
        "n_slices": res.stack.n,
    }


def cmd_preprocess(args, cfg: RunConfig) -> int:
    manifest = load_manifest(args.manifest)
    out = _out_dir(cfg)
    if not manifest.cases:
        log.warning("manifest %s lists no cases; nothing to do", args.manifest)
    cases = sorted(manifest.cases, key=lambda c: c.case_id)
    results = map_cases(partial(_preprocess_one, cfg=cfg, out=out), cases, cfg.jobs)
    ids = [c.case_id for c in cases]
    report = _status(results, ids)
    report["cases"] = {cid: r for cid, (ok, r) in zip(ids, results) if ok}

    done = []
    for c, (ok, _) in zip(cases, results):
        if not ok:
            continue
        case_dir = out / c.case_id
        label = case_dir / "label.nii.gz" if c.label is not None else None
        done.append(Case(c.case_id, case_dir / "image.nii.gz", label, c.domain, c.augmented))
    outputs = [_dump(report, out / "preprocess_report.json")]
    save_manifest(DatasetManifest(manifest.name, done), out / "manifest.json")
    outputs.append(out / "manifest.json")
    for c in done:
        outputs += sorted((out / c.case_id).rglob("*.*"))
    write_provenance(out, cfg, outputs)
    return _finish(report)


# ----------------------------------------------------------------------------
# augment

def cmd_augment(args, cfg: RunConfig) -> int:
    manifest = load_manifest(args.manifest)
    target = Path(args.out_manifest) if args.out_manifest else Path(args.manifest).with_name(
        Path(args.manifest).stem + AT_SUFFIX + ".json")
    expanded = expand_dataset(manifest, cfg.augment, args.at_dir, cfg.jobs)
    save_manifest(expanded, target)
    added = len(expanded) - len(manifest)
    log.info("wrote %s: %d cases (%d augmented variants added)", target, len(expanded), added)
    return EXIT_OK


# ----------------------------------------------------------------------------
# stack

def _stack_one(job, fmt: Optional[str]) -> str:
    case_id, sidecar, slice_root, target = job
    stack = read_slices(sidecar, slice_root, fmt)
    vol = stack_z(stack)
    target.parent.mkdir(parents=True, exist_ok=True)
    ox, oy = stack.crop_offset
    write_nifti(vol, target, descrip=f"crop_offset={ox},{oy}")
    return str(target)


def cmd_stack(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    jobs = []
    cases: List[Case] = []
    name = "stacked"
    if args.manifest:
        manifest = load_manifest(args.manifest)
        name = manifest.name
        for c in sorted(manifest.cases, key=lambda c: c.case_id):
            if c.augmented:
                log.info("skipping augmented case %s (no slice export)", c.case_id)
                continue
            sidecar = Path(c.image).parent / SIDECAR_NAME
            root = Path(args.slice_root) / c.case_id if args.slice_root else None
            jobs.append((c.case_id, sidecar, root, out / c.case_id / "image.nii.gz"))
            cases.append(c)
    for d in args.slices or []:
        d = Path(d)
        meta = read_sidecar(d)
        cid = meta.get("case_id") or d.name
        root = Path(args.slice_root) if args.slice_root else None
        jobs.append((cid, d, root, out / cid / "image.nii.gz"))
        cases.append(Case(cid, d / "image.nii.gz"))
    if not jobs:
        raise ModakitError("stack needs --manifest or --slices")

    results = map_cases(partial(_stack_one, fmt=args.format), jobs, cfg.jobs)
    report = _status(results, [j[0] for j in jobs])
    stacked = [Case(c.case_id, Path(j[3]), c.label, c.domain, c.augmented)
               for c, j, (ok, _) in zip(cases, jobs, results) if ok]
    save_manifest(DatasetManifest(name, stacked), out / "manifest.json")
    _dump(report, out / "stack_report.json")
    return _finish(report)


# ----------------------------------------------------------------------------
# ensemble

def _ensemble_one(job, save_probs: bool) -> dict:
    case_id, sidecars, out = job
    mean = average_probs([read_probs(s) for s in sidecars])
    write_nifti(argmax_labels(mean), out / f"{case_id}.nii.gz")
    if save_probs:
        write_probs(mean, out / "probs" / f"{case_id}.json")
    return {"members": len(sidecars), "channels": list(mean.labels)}


def cmd_ensemble(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    dirs = [Path(d) for d in args.probs]
    per_dir = [{p.stem: p for p in d.glob("*.json")} for d in dirs]
    all_ids = sorted(set().union(*[set(m) for m in per_dir]))
    jobs, missing = [], []
    for cid in all_ids:
        absent = [str(d) for d, m in zip(dirs, per_dir) if cid not in m]
        if absent:
            missing.append({"case_id": cid, "error": f"no probabilities in {', '.join(absent)}"})
        else:
            jobs.append((cid, [m[cid] for m in per_dir], out))
    results = map_cases(partial(_ensemble_one, save_probs=args.save_probs), jobs, cfg.jobs)
    report = _status(results, [j[0] for j in jobs])
    report["n_cases"] += len(missing)
    report["failed"] = sorted(report["failed"] + missing, key=lambda f: f["case_id"])
    report["members"] = [str(d) for d in dirs]
    _dump(report, out / "ensemble_report.json")
    return _finish(report)


# ----------------------------------------------------------------------------
# evaluate

def _label_index(src: str) -> dict:
    """Map case_id -> label file from a manifest (JSON) or a directory of NIfTI files."""
    p = Path(src)
    if p.is_file():
        m = load_manifest(p)
        return {c.case_id: c.label for c in m.cases if c.label is not None and not c.augmented}
    if not p.is_dir():
        raise ModakitError(f"{src} is neither a manifest nor a directory")
    index = {}
    for f in sorted(p.iterdir()):
        for ext in NIFTI_EXTS:
            if f.name.endswith(ext):
                index[f.name[: -len(ext)]] = f
                break
    return index


def _evaluate_one(job, labels):
    case_id, pred_path, gt_path = job
    pred = read_nifti(pred_path, "label", labels=None)
    gt = read_nifti(gt_path, "label", labels=None)
    return evaluate_case(pred, gt, labels, case_id)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    preds = _label_index(args.pred)
    gts = _label_index(args.gt)
    ids = sorted(gts)
    if not ids:
        raise ModakitError(f"no ground-truth labels found in {args.gt}")
    jobs, missing = [], []
    for cid in ids:
        if cid in preds:
            jobs.append((cid, preds[cid], gts[cid]))
        else:
            missing.append({"case_id": cid, "error": "no prediction"})
    labels = tuple(args.labels)
    results = map_cases(partial(_evaluate_one, labels=labels), jobs, cfg.jobs)
    status = _status(results, [j[0] for j in jobs])
    status["n_cases"] += len(missing)
    status["failed"] = sorted(status["failed"] + missing, key=lambda f: f["case_id"])
    metrics = [r for ok, r in results if ok]
    report = {"status": status}
    if metrics:
        agg = aggregate(metrics, args.name)
        report.update(agg.to_dict())
        table = agg.table()
        (out / "evaluation.txt").write_text(table)
        print(table, end="")
    _dump(report, out / "evaluation.json")
    return _finish(status)


# ----------------------------------------------------------------------------
# fid, split

def cmd_fid(args, cfg: RunConfig) -> int:
    xa = read_features(args.features_a)
    xb = read_features(args.features_b)
    value = frechet_distance(summarize(xa), summarize(xb))
    print(f"{value:.6f}")
    if args.out_json:
        _dump({"features_a": str(args.features_a), "features_b": str(args.features_b),
               "n_a": int(xa.shape[0]), "n_b": int(xb.shape[0]), "d": int(xa.shape[1]),
               "fid": value}, Path(args.out_json))
    return EXIT_OK


def cmd_split(args, cfg: RunConfig) -> int:
    manifest = load_manifest(args.manifest)
    ids = [c.case_id for c in manifest.cases if not c.augmented]
    folds = kfold_split(ids, cfg.k, cfg.seed)
    payload = folds.to_dict()
    payload["seed"] = cfg.seed
    text = json.dumps(payload, indent=2) + "\n"
    if cfg.out_dir:
        _dump(payload, Path(cfg.out_dir) / "splits.json")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--out", help="output directory (env MODAKIT_OUT)")
    common.add_argument("--jobs", type=int, help="parallel case workers (env MODAKIT_JOBS)")
    common.add_argument("--seed", type=int, help="seed for every random choice")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="modakit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"modakit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="resample, normalize, crop and slice each case")
    p.add_argument("--manifest", required=True)
    p.add_argument("--format", dest="slice_format", choices=["raw_f32", "png16"])
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("augment", parents=[common], help="add reduced-tumor-signal variants")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", type=float, help="intensity factor in (0, 1] (default 0.5)")
    p.add_argument("--label", type=int, help="label whose voxels are dimmed (default 1)")
    p.add_argument("--at-dir", help="write AT volumes here instead of next to the originals")
    p.add_argument("--out-manifest", help="expanded manifest path (default <manifest>_at.json)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("stack", parents=[common], help="rebuild volumes from slice exports")
    p.add_argument("--manifest", help="manifest written by 'preprocess'")
    p.add_argument("--slices", action="append", help="a single case export directory (repeatable)")
    p.add_argument("--slice-root", help="translator output root mirroring the export layout")
    p.add_argument("--format", choices=["raw_f32", "png16"], help="slice file format if changed by the translator")
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("ensemble", parents=[common], help="average per-fold probabilities and take argmax")
    p.add_argument("--probs", nargs="+", required=True, help="one directory of <case>.json sidecars per fold")
    p.add_argument("--save-probs", action="store_true")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("evaluate", parents=[common], help="Dice and ASSD report")
    p.add_argument("--pred", required=True, help="directory of <case>.nii[.gz] or a manifest")
    p.add_argument("--gt", required=True, help="directory of <case>.nii[.gz] or a manifest")
    p.add_argument("--labels", type=int, nargs="+", default=[1, 2])
    p.add_argument("--name", default="experiment")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fid", parents=[common], help="Fréchet distance between two feature files")
    p.add_argument("features_a")
    p.add_argument("features_b")
    p.add_argument("--json", dest="out_json", help="also write the result as JSON")
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("split", parents=[common], help="k-fold assignment of manifest cases")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_split)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(
            cfg,
            out_dir=args.out,
            jobs=args.jobs,
            seed=args.seed,
            factor=getattr(args, "factor", None),
            label=getattr(args, "label", None),
            slice_format=getattr(args, "slice_format", None),
            k=getattr(args, "k", None),
        )
        return args.func(args, cfg)
    except ModakitError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
