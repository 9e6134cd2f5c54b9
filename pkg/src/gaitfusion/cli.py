"""Command-line entry points.

Subcommands: synth (generate a labelled cohort), analyze (trials -> attitude,
events and the feature table), stats (feature table -> group comparison
report and standardized profiles), classify (feature table -> importance
ranking and cross-validated metrics), all (the whole chain).

Every run writes manifest.json holding the command, seed, config hash and
output digests; data outputs embed the manifest hash so results can be tied
back to the run that made them.  With a fixed config and seed all data
outputs are byte-identical across runs; wall-clock timings are kept apart in
timings.json so they cannot break that.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ToolkitConfig, load_config, override
from .errors import ToolkitError, ValidationError
from .features import FEATURE_NAMES, analyze_trial
from .imu_io import Group, parse_trial, write_trial
from .ml import LabeledDataset, MlConfig, evaluate_all, rank_features, select_top
from .stats import Comparison, baseline_offset, compare_groups, standardize
from .synth import generate_population, write_truth


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _manifest(command: str, cfg_bytes: bytes, seed: int, inputs: list) -> dict:
    core = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config_sha256": _sha256(cfg_bytes),
        "inputs": sorted(str(p) for p in inputs),
    }
    core["manifest_hash"] = _sha256(
        json.dumps(core, sort_keys=True).encode())[:16]
    return core


def _finish_manifest(manifest: dict, out_dir: Path) -> None:
    outputs = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name not in ("manifest.json", "timings.json"):
            outputs[str(p.relative_to(out_dir))] = _sha256(p.read_bytes())
    manifest["outputs"] = outputs
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list, rows: list, manifest_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest={manifest_hash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _fmt(v) -> str:
    return f"{v:.9g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# synth

def cmd_synth(cfg: ToolkitConfig, cfg_bytes: bytes, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("synth", cfg_bytes, cfg.seed, [])
    records = generate_population(n_ldh=cfg.n_ldh, n_control=cfg.n_control,
                                  duration_s=cfg.duration_s, seed=cfg.seed)
    for rec in records:
        base = out_dir / f"{rec.trial.subject_id}_{rec.trial.leg.value}.csv"
        write_trial(rec.trial, base, manifest_hash=manifest["manifest_hash"])
        write_truth(rec.truth, rec.trial, base,
                    manifest_hash=manifest["manifest_hash"])
    _finish_manifest(manifest, out_dir)
    return manifest


# ---------------------------------------------------------------------------
# analyze

def _analyze_one(path_str: str, cfg: ToolkitConfig):
    trial = parse_trial(path_str, cfg.ingest)
    series, cycles, fv = analyze_trial(trial, cfg.preproc, cfg.fusion,
                                       cfg.seg, cfg.embed)
    events = [(e.kind, e.t) for e in cycles.events]
    attitude = np.column_stack([series.t, np.degrees(series.angles),
                                series.innovation_norm])
    return Path(path_str).stem, attitude, events, fv, cycles.diagnostics


def _trial_paths(inputs: list) -> list:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            for f in sorted(p.glob("*.csv")):
                if not (f.name.endswith(".truth.csv")
                        or f.name.endswith(".events.csv")
                        or f.name.endswith(".attitude.csv")
                        or f.name.endswith(".pred_events.csv")):
                    paths.append(f)
        elif p.exists():
            paths.append(p)
        else:
            raise ValidationError(f"input {item!r} does not exist")
    if not paths:
        raise ValidationError("no trial CSVs found in the given inputs")
    return paths


def cmd_analyze(cfg: ToolkitConfig, cfg_bytes: bytes, out_dir: Path,
                inputs: list) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _trial_paths(inputs)
    manifest = _manifest("analyze", cfg_bytes, cfg.seed, paths)
    mh = manifest["manifest_hash"]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_analyze_one, [str(p) for p in paths],
                                    [cfg] * len(paths)))
    else:
        results = [_analyze_one(str(p), cfg) for p in paths]
    feature_rows = []
    for stem, attitude, events, fv, diags in results:
        _write_csv(out_dir / f"{stem}.attitude.csv",
                   ["t", "roll_deg", "pitch_deg", "yaw_deg", "innovation_norm"],
                   [[_fmt(float(v)) for v in row] for row in attitude], mh)
        _write_csv(out_dir / f"{stem}.pred_events.csv", ["t", "kind"],
                   [[_fmt(float(t)), kind] for kind, t in events], mh)
        feature_rows.append([fv.subject_id, fv.leg, fv.group, fv.n_strides]
                            + [_fmt(float(v)) for v in fv.values])
    _write_csv(out_dir / "features.csv",
               ["subject_id", "leg", "group", "n_strides", *FEATURE_NAMES],
               feature_rows, mh)
    _finish_manifest(manifest, out_dir)
    return manifest


# ---------------------------------------------------------------------------
# stats / classify shared input handling

def read_features(path) -> list:
    """Rows of the feature table as dicts with floats for feature columns."""
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    missing = set(FEATURE_NAMES) - set(reader.fieldnames or ())
    if missing:
        raise ValidationError(f"feature table lacks columns {sorted(missing)}")
    for rec in reader:
        row = {"subject_id": rec["subject_id"], "leg": rec["leg"],
               "group": rec["group"]}
        for name in FEATURE_NAMES:
            row[name] = float(rec[name])
        rows.append(row)
    if not rows:
        raise ValidationError(f"{path}: empty feature table")
    return rows


def group_feature_matrices(rows: list) -> dict:
    """Member matrices per comparison group.

    LDH sides contribute one member per trial; control subjects contribute
    the mean of their two legs (plus per-leg matrices for the left/right
    comparison).  Rows are ordered by subject then leg for determinism.
    """
    rows = sorted(rows, key=lambda r: (r["subject_id"], r["leg"]))
    by_group: dict = {g.value: [] for g in Group}
    per_leg: dict = {"control_left": [], "control_right": []}
    control_by_subject: dict = {}
    for r in rows:
        vec = [r[name] for name in FEATURE_NAMES]
        if r["group"] == Group.CONTROL.value:
            control_by_subject.setdefault(r["subject_id"], []).append(vec)
            per_leg[f"control_{r['leg']}"].append(vec)
        else:
            by_group[r["group"]].append(vec)
    matrices = {}
    for g in (Group.LDH_HEALTHY.value, Group.LDH_AFFECTED.value):
        if by_group[g]:
            matrices[g] = np.array(by_group[g])
    if control_by_subject:
        matrices[Group.CONTROL.value] = np.array(
            [np.mean(v, axis=0) for _, v in sorted(control_by_subject.items())])
    for key, v in per_leg.items():
        if v:
            matrices[key] = np.array(v)
    return matrices


DEFAULT_COMPARISONS = (
    Comparison("HE", (Group.LDH_HEALTHY.value, Group.LDH_AFFECTED.value)),
    Comparison("H-H", (Group.LDH_HEALTHY.value, Group.CONTROL.value)),
    Comparison("E-H", (Group.LDH_AFFECTED.value, Group.CONTROL.value)),
    Comparison("LR", ("control_left", "control_right"), method="anova"),
)


def cmd_stats(cfg: ToolkitConfig, cfg_bytes: bytes, out_dir: Path,
              features_path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("stats", cfg_bytes, cfg.seed, [features_path])
    mh = manifest["manifest_hash"]
    rows = read_features(features_path)
    matrices = group_feature_matrices(rows)
    comparisons = [c for c in DEFAULT_COMPARISONS
                   if all(g in matrices for g in c.groups)]
    report = compare_groups(matrices, FEATURE_NAMES, comparisons)

    main_groups = [g.value for g in Group if g.value in matrices]
    header = ["feature"]
    for g in main_groups:
        header += [f"{g}_mean", f"{g}_sd", f"{g}_n"]
    header += [f"p_{c.name}" for c in comparisons]
    table = []
    for row in report.rows:
        line = [row.feature]
        for g in main_groups:
            mean, sd, n = row.group_stats[g]
            line += [_fmt(mean), _fmt(sd), str(n)]
        line += [_fmt(o.p) for o in row.outcomes]
        table.append(line)
    _write_csv(out_dir / "stats_report.csv", header, table, mh)

    json_rows = []
    for row in report.rows:
        json_rows.append({
            "feature": row.feature,
            "groups": {g: {"mean": s[0], "sd": s[1], "n": s[2]}
                       for g, s in row.group_stats.items()},
            "comparisons": [dataclasses.asdict(o) for o in row.outcomes],
        })
    (out_dir / "stats_report.json").write_text(json.dumps(
        {"manifest_hash": mh, "alpha": report.alpha, "rows": json_rows},
        sort_keys=True, indent=2) + "\n")

    # Standardized group profiles (radar data) and baseline offsets.
    stack = []
    slices = {}
    for g in main_groups:
        mat = matrices[g]
        slices[g] = slice(len(stack), len(stack) + len(mat))
        stack.extend(mat)
    z, _, _ = standardize(np.array(stack))
    radar_rows = []
    group_means = {}
    for g in main_groups:
        zg = z[slices[g]]
        group_means[g] = zg.mean(axis=0)
        for j, name in enumerate(FEATURE_NAMES):
            radar_rows.append([g, name, _fmt(float(group_means[g][j]))])
    _write_csv(out_dir / "radar.csv", ["group", "feature", "z_mean"],
               radar_rows, mh)
    offsets = {"manifest_hash": mh}
    if Group.CONTROL.value in slices:
        base = group_means[Group.CONTROL.value]
        for g in (Group.LDH_HEALTHY.value, Group.LDH_AFFECTED.value):
            if g in slices:
                offsets[f"OFF_{g}"] = baseline_offset(z[slices[g]], base)
    (out_dir / "offsets.json").write_text(
        json.dumps(offsets, sort_keys=True, indent=2) + "\n")
    _finish_manifest(manifest, out_dir)
    return manifest


# ---------------------------------------------------------------------------
# classify

def _datasets(rows: list):
    """Three-class dataset (healthy side / affected side / control subject
    means) and the binary patient-vs-control variant."""
    matrices = group_feature_matrices(rows)
    order = (Group.LDH_HEALTHY.value, Group.LDH_AFFECTED.value,
             Group.CONTROL.value)
    missing = [g for g in order if g not in matrices]
    if missing:
        raise ValidationError(f"classification needs groups {missing}")
    X = np.vstack([matrices[g] for g in order])
    y = np.concatenate([np.full(len(matrices[g]), i, dtype=int)
                        for i, g in enumerate(order)])
    three = LabeledDataset(X=X, y=y, feature_names=FEATURE_NAMES,
                           class_names=order)
    y_bin = np.where(y == 2, 0, 1)
    binary = LabeledDataset(X=X, y=y_bin, feature_names=FEATURE_NAMES,
                            class_names=("control", "LDH"))
    return {"three_class": three, "binary": binary}


def cmd_classify(cfg: ToolkitConfig, cfg_bytes: bytes, out_dir: Path,
                 features_path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("classify", cfg_bytes, cfg.seed, [features_path])
    mh = manifest["manifest_hash"]
    ml_cfg = dataclasses.replace(cfg.ml, seed=cfg.seed)
    rows = read_features(features_path)
    tasks = _datasets(rows)

    ranks = rank_features(tasks["three_class"], ml_cfg)
    _write_csv(out_dir / "importance.csv",
               ["feature", "correlation", "importance"],
               [[fr.name, _fmt(fr.correlation), _fmt(fr.importance)]
                for fr in ranks], mh)

    metric_rows = []
    detail = {"manifest_hash": mh, "selected_features": None, "tasks": {}}
    for task_name, dataset in tasks.items():
        selected = select_top(dataset, ranks, ml_cfg.top_k)
        detail["selected_features"] = list(selected.feature_names)
        results = evaluate_all(selected, ml_cfg)
        detail["tasks"][task_name] = {}
        for name, res in results.items():
            m = res.metrics
            metric_rows.append([task_name, name, _fmt(m.accuracy),
                                _fmt(m.precision), _fmt(m.recall), _fmt(m.f1)])
            detail["tasks"][task_name][name] = {
                "metrics": dataclasses.asdict(m),
                "confusion": res.confusion.tolist(),
                "fold_accuracy": res.fold_accuracy,
                "notes": res.notes,
            }
    _write_csv(out_dir / "metrics.csv",
               ["task", "classifier", "accuracy", "precision", "recall", "f1"],
               metric_rows, mh)
    (out_dir / "metrics.json").write_text(
        json.dumps(detail, sort_keys=True, indent=2) + "\n")
    _finish_manifest(manifest, out_dir)
    return manifest


# ---------------------------------------------------------------------------
# all

def cmd_all(cfg: ToolkitConfig, cfg_bytes: bytes, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("all", cfg_bytes, cfg.seed, [])
    timings = {}
    t0 = time.perf_counter()
    cmd_synth(cfg, cfg_bytes, out_dir / "synth")
    timings["synth"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    cmd_analyze(cfg, cfg_bytes, out_dir / "analyze", [out_dir / "synth"])
    timings["analyze"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    cmd_stats(cfg, cfg_bytes, out_dir / "stats",
              out_dir / "analyze" / "features.csv")
    timings["stats"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    cmd_classify(cfg, cfg_bytes, out_dir / "classify",
                 out_dir / "analyze" / "features.csv")
    timings["classify"] = time.perf_counter() - t0
    manifest["stages"] = ["synth", "analyze", "stats", "classify"]
    _finish_manifest(manifest, out_dir)
    (out_dir / "timings.json").write_text(
        json.dumps(timings, sort_keys=True, indent=2) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitfusion",
        description="IMU gait assessment: fusion, segmentation, features, "
                    "statistics, classification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_features=False, takes_inputs=False):
        p.add_argument("--config", type=Path, default=None,
                       help="plain-text key=value configuration file")
        p.add_argument("--out-dir", type=Path, required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
        if needs_features:
            p.add_argument("--features", type=Path, required=True,
                           help="features.csv from the analyze step")
        if takes_inputs:
            p.add_argument("inputs", nargs="+",
                           help="trial CSV files or directories of them")

    common(sub.add_parser("synth", help="generate a synthetic cohort"))
    common(sub.add_parser("analyze", help="trials -> attitude/events/features"),
           takes_inputs=True)
    common(sub.add_parser("stats", help="feature table -> comparison report"),
           needs_features=True)
    common(sub.add_parser("classify", help="feature table -> CV metrics"),
           needs_features=True)
    common(sub.add_parser("all", help="synth + analyze + stats + classify"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg, cfg_bytes = load_config(args.config)
        else:
            cfg, cfg_bytes = ToolkitConfig(), b""
        cfg = override(cfg, seed=args.seed, jobs=args.jobs)
        if args.command == "synth":
            cmd_synth(cfg, cfg_bytes, args.out_dir)
        elif args.command == "analyze":
            cmd_analyze(cfg, cfg_bytes, args.out_dir, args.inputs)
        elif args.command == "stats":
            cmd_stats(cfg, cfg_bytes, args.out_dir, args.features)
        elif args.command == "classify":
            cmd_classify(cfg, cfg_bytes, args.out_dir, args.features)
        elif args.command == "all":
            cmd_all(cfg, cfg_bytes, args.out_dir)
    except ToolkitError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
