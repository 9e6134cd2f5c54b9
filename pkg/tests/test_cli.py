"""End-to-end command-line workflow on a small synthetic cohort."""

import json
import shutil
import subprocess

import numpy as np
import pytest

from gaitfusion.cli import (DEFAULT_COMPARISONS, _manifest,
                            group_feature_matrices, main, read_features)
from gaitfusion.errors import ValidationError
from gaitfusion.features import FEATURE_NAMES
from gaitfusion.imu_io import parse_trial

SMALL_CFG = """\
n_ldh = 3
n_control = 3
duration_s = 12
seed = 7
cv_folds = 3
"""


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.cfg"
    p.write_text(SMALL_CFG)
    return p


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory, cfg_path):
    out = tmp_path_factory.mktemp("cohort")
    assert main(["synth", "--config", str(cfg_path),
                 "--out-dir", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def analyzed_dir(tmp_path_factory, cfg_path, cohort_dir):
    out = tmp_path_factory.mktemp("analyzed")
    assert main(["analyze", "--config", str(cfg_path),
                 "--out-dir", str(out), str(cohort_dir)]) == 0
    return out


def test_synth_writes_cohort_with_manifest(cohort_dir):
    trials = [p for p in cohort_dir.glob("*.csv")
              if not (p.name.endswith(".truth.csv")
                      or p.name.endswith(".events.csv"))]
    assert len(trials) == 2 * 3 + 2 * 3
    assert len(list(cohort_dir.glob("*.truth.csv"))) == 12
    assert len(list(cohort_dir.glob("*.events.csv"))) == 12
    manifest = json.loads((cohort_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 7
    assert len(manifest["outputs"]) == 3 * 12 + 12  # data + .meta sidecars
    one = trials[0].read_text().splitlines()
    assert one[0] == f"# manifest={manifest['manifest_hash']}"


def test_analyze_outputs_line_up_with_trials(cohort_dir, analyzed_dir):
    manifest = json.loads((analyzed_dir / "manifest.json").read_text())
    rows = read_features(analyzed_dir / "features.csv")
    assert len(rows) == 12
    stems = sorted(r["subject_id"] + "_" + r["leg"] for r in rows)
    assert stems == sorted(p.stem for p in cohort_dir.glob("*.csv")
                           if not (p.name.endswith(".truth.csv")
                                   or p.name.endswith(".events.csv")))
    att = sorted(analyzed_dir.glob("*.attitude.csv"))[0]
    stem = att.name.removesuffix(".attitude.csv")
    trial = parse_trial(cohort_dir / f"{stem}.csv")
    lines = att.read_text().splitlines()
    assert lines[0] == f"# manifest={manifest['manifest_hash']}"
    assert lines[1] == "t,roll_deg,pitch_deg,yaw_deg,innovation_norm"
    assert len(lines) - 2 == trial.n
    ev = analyzed_dir / f"{stem}.pred_events.csv"
    kinds = [ln.split(",")[1] for ln in ev.read_text().splitlines()[2:]]
    assert set(kinds) == {"HS", "TO"}


def test_read_features_validates(tmp_path, analyzed_dir):
    rows = read_features(analyzed_dir / "features.csv")
    assert set(FEATURE_NAMES) <= set(rows[0])
    assert isinstance(rows[0]["SF"], float)
    bad = tmp_path / "bad.csv"
    bad.write_text("subject_id,leg,group,SF\na,left,control,1.0\n")
    with pytest.raises(ValidationError, match="lacks columns"):
        read_features(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("subject_id,leg,group," + ",".join(FEATURE_NAMES) + "\n")
    with pytest.raises(ValidationError, match="empty"):
        read_features(empty)


def test_group_matrices_average_control_legs():
    def row(sid, leg, group, value):
        r = {"subject_id": sid, "leg": leg, "group": group}
        r.update({name: value for name in FEATURE_NAMES})
        return r

    rows = [
        row("p1", "left", "LDH_healthy_side", 1.0),
        row("p1", "right", "LDH_affected_side", 2.0),
        row("c1", "left", "control", 3.0),
        row("c1", "right", "control", 5.0),
        row("c2", "left", "control", 7.0),
        row("c2", "right", "control", 7.0),
    ]
    mats = group_feature_matrices(rows)
    assert mats["LDH_healthy_side"].shape == (1, 12)
    assert mats["control"].shape == (2, 12)
    np.testing.assert_allclose(mats["control"][:, 0], [4.0, 7.0])
    np.testing.assert_allclose(mats["control_left"][:, 0], [3.0, 7.0])
    np.testing.assert_allclose(mats["control_right"][:, 0], [5.0, 7.0])


def test_stats_report_files(tmp_path, cfg_path, analyzed_dir):
    out = tmp_path / "stats"
    assert main(["stats", "--config", str(cfg_path), "--out-dir", str(out),
                 "--features", str(analyzed_dir / "features.csv")]) == 0
    lines = (out / "stats_report.csv").read_text().splitlines()
    header = lines[1].split(",")
    assert header[0] == "feature"
    for c in DEFAULT_COMPARISONS:
        assert f"p_{c.name}" in header
    assert [ln.split(",")[0] for ln in lines[2:]] == list(FEATURE_NAMES)
    report = json.loads((out / "stats_report.json").read_text())
    assert len(report["rows"]) == 12
    for rec in report["rows"]:
        for outcome in rec["comparisons"]:
            assert 0.0 <= outcome["p"] <= 1.0
    offsets = json.loads((out / "offsets.json").read_text())
    assert offsets["OFF_LDH_affected_side"] > 0.0
    radar = (out / "radar.csv").read_text().splitlines()
    assert len(radar) - 2 == 3 * 12


def test_classify_metrics_files(tmp_path, cfg_path, analyzed_dir):
    out = tmp_path / "clf"
    assert main(["classify", "--config", str(cfg_path), "--out-dir", str(out),
                 "--features", str(analyzed_dir / "features.csv")]) == 0
    imp = (out / "importance.csv").read_text().splitlines()
    assert len(imp) - 2 == 12
    importances = [float(ln.split(",")[2]) for ln in imp[2:]]
    assert importances == sorted(importances, reverse=True)
    metrics = (out / "metrics.csv").read_text().splitlines()
    assert len(metrics) - 2 == 2 * 3  # two tasks, three classifiers
    detail = json.loads((out / "metrics.json").read_text())
    assert set(detail["tasks"]) == {"three_class", "binary"}
    assert len(detail["selected_features"]) == 9
    for task in detail["tasks"].values():
        for res in task.values():
            assert 0.0 <= res["metrics"]["accuracy"] <= 1.0


def test_parallel_analyze_matches_serial(tmp_path, cfg_path, cohort_dir,
                                         analyzed_dir):
    out = tmp_path / "par"
    assert main(["analyze", "--config", str(cfg_path), "--out-dir", str(out),
                 "--jobs", "2", str(cohort_dir)]) == 0
    assert (out / "features.csv").read_bytes() == \
        (analyzed_dir / "features.csv").read_bytes()
    name = sorted(p.name for p in out.glob("*.attitude.csv"))[0]
    assert (out / name).read_bytes() == (analyzed_dir / name).read_bytes()


def test_rerun_into_same_dir_is_byte_identical(tmp_path, cfg_path,
                                               cohort_dir):
    out = tmp_path / "twice"
    args = ["analyze", "--config", str(cfg_path), "--out-dir", str(out),
            str(cohort_dir)]
    assert main(args) == 0
    before = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(args) == 0
    after = {p.name: p.read_bytes() for p in out.iterdir()}
    assert before == after


def test_seed_flag_overrides_config(tmp_path, cfg_path):
    out = tmp_path / "seeded"
    assert main(["synth", "--config", str(cfg_path), "--out-dir", str(out),
                 "--seed", "21"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 21


def test_manifest_hash_covers_command_seed_and_config():
    a = _manifest("analyze", b"seed = 1\n", 1, [])
    assert a == _manifest("analyze", b"seed = 1\n", 1, [])
    assert a != _manifest("analyze", b"seed = 1\n", 2, [])
    assert a != _manifest("stats", b"seed = 1\n", 1, [])
    assert a != _manifest("analyze", b"seed = 2\n", 1, [])
    assert len(a["manifest_hash"]) == 16


def test_bad_input_exits_two(tmp_path, capsys):
    code = main(["analyze", "--out-dir", str(tmp_path / "x"),
                 str(tmp_path / "missing.csv")])
    assert code == 2
    assert "does not exist" in capsys.readouterr().err


def test_console_script_installed():
    exe = shutil.which("gaitfusion")
    assert exe, "gaitfusion entry point missing from PATH"
    out = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("synth", "analyze", "stats", "classify", "all"):
        assert name in out.stdout
