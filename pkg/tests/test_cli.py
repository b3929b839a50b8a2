import csv
import io
import json

import pytest

from coopfuse.cli import main
from coopfuse.cpm import Cpm, encode_cpm, write_container
from coopfuse.geometry import Pose2


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_one_frame(tmp_path, capsys):
    code, out, _ = run(["simulate", "--out", str(tmp_path), "--frames", "1", "--seed", "3"], capsys)
    assert code == 0
    assert sorted(p.name for p in tmp_path.glob("frame_*")) == ["frame_000000.cpms", "frame_000000.gt.txt"]
    rows = read_csv(out)
    assert len(rows) == 1 and rows[0]["container"] == "frame_000000.cpms"
    assert json.loads((tmp_path / "config.json").read_text())["run"]["seed"] == 3


def test_simulate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["simulate", "--out", str(d), "--frames", "2", "--seed", "11", "--noise"], capsys)[0] == 0
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_invalid_config_exit_code(tmp_path, capsys):
    code, _, err = run(["simulate", "--out", str(tmp_path), "--set", "sim.comm_range=-5"], capsys)
    assert code == 2
    assert "sim.comm_range" in err
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sim": {"no_such_field": 1}}))
    code, _, err = run(["simulate", "--out", str(tmp_path), "--config", str(cfg)], capsys)
    assert code == 2 and "sim.no_such_field" in err


def test_fuse_eval_rows_and_zero_coops(tmp_path, capsys):
    code, out, _ = run(["fuse-eval", "--out", str(tmp_path), "--frames", "3", "--seed", "1",
                        "--pipelines", "no_fusion", "alg1"], capsys)
    assert code == 0
    rows = read_csv((tmp_path / "results.csv").read_text())
    assert len(rows) == 18
    base = {r["iou"]: r for r in rows if r["n_v"] == "0" and r["pipeline"] == "no_fusion"}
    for r in rows:
        if r["n_v"] == "0":
            assert (r["ap"], r["n_pred"], r["n_gt"]) == (base[r["iou"]]["ap"], base[r["iou"]]["n_pred"],
                                                         base[r["iou"]]["n_gt"])
    assert len(list((tmp_path / "curves").glob("pr_*.csv"))) == 18
    sizes = read_csv((tmp_path / "cpm_sizes.csv").read_text())[0]
    assert float(sizes["ratio_median"]) > 10


def test_fuse_eval_from_stored_frames_matches_generated(tmp_path, capsys):
    frames = tmp_path / "frames"
    assert run(["simulate", "--out", str(frames), "--frames", "3", "--seed", "4"], capsys)[0] == 0
    assert run(["fuse-eval", "--out", str(tmp_path / "a"), "--frames-dir", str(frames)], capsys)[0] == 0
    assert run(["fuse-eval", "--out", str(tmp_path / "b"), "--frames", "3", "--seed", "4"], capsys)[0] == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_fuse_eval_missing_frames(tmp_path, capsys):
    code, _, err = run(["fuse-eval", "--out", str(tmp_path), "--frames-dir", str(tmp_path / "none")], capsys)
    assert code == 1 and "no frame containers" in err


def test_seed_precedence(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("COOPFUSE_SEED", "9")
    run(["simulate", "--out", str(tmp_path / "env"), "--frames", "1"], capsys)
    assert json.loads((tmp_path / "env" / "config.json").read_text())["run"]["seed"] == 9
    run(["simulate", "--out", str(tmp_path / "flag"), "--frames", "1", "--seed", "2"], capsys)
    assert json.loads((tmp_path / "flag" / "config.json").read_text())["run"]["seed"] == 2


def test_cpm_stats_empty_message(tmp_path, capsys):
    path = tmp_path / "one.cpms"
    write_container(path, [encode_cpm(Cpm(5, Pose2(0, 0, 0)))])
    code, out, _ = run(["cpm-stats", str(path)], capsys)
    assert code == 0
    row = read_csv(out)[0]
    assert row["bytes"] == "36" and row["sender_id"] == "5"
    assert row["ratio"] == f"{int(row['dense_grid_bytes']) / 36:.6f}"


def test_cpm_stats_reports_truncation_offset(tmp_path, capsys):
    frames = tmp_path / "frames"
    run(["simulate", "--out", str(frames), "--frames", "1"], capsys)
    container = frames / "frame_000000.cpms"
    data = container.read_bytes()
    code, out, _ = run(["cpm-stats", str(container)], capsys)
    assert code == 0
    rows = read_csv(out)
    for r in rows:
        assert r["ratio"] == f"{int(r['dense_grid_bytes']) / int(r['bytes']):.6f}"
    first = int(rows[0]["bytes"])
    container.write_bytes(data[: 4 + first + 10])
    code, _, err = run(["cpm-stats", str(container)], capsys)
    assert code == 1
    assert f"offset {4 + first}" in err


def test_sweep_small(tmp_path, capsys):
    code, out, _ = run(["sweep", "--out", str(tmp_path), "--frames", "2", "--n-kpts", "64",
                        "--n-ch", "8", "16", "--n-v", "0", "--pipelines", "no_fusion", "--iou", "0.5"], capsys)
    assert code == 0
    rows = read_csv(out)
    assert [(r["n_kpts"], r["n_ch"]) for r in rows] == [("64", "8"), ("64", "16")]
    assert float(rows[0]["cpm_median_bytes"]) < float(rows[1]["cpm_median_bytes"])


def test_sweep_bad_channel_count(tmp_path, capsys):
    code, _, err = run(["sweep", "--out", str(tmp_path), "--frames", "1", "--n-ch", "300"], capsys)
    assert code == 2


def test_jobs_do_not_change_results(tmp_path, capsys):
    args = ["fuse-eval", "--frames", "4", "--seed", "6", "--n-v", "2", "--pipelines", "alg1"]
    run(args + ["--out", str(tmp_path / "j1")], capsys)
    run(args + ["--out", str(tmp_path / "j2"), "--jobs", "2"], capsys)
    assert (tmp_path / "j1" / "results.csv").read_bytes() == (tmp_path / "j2" / "results.csv").read_bytes()
