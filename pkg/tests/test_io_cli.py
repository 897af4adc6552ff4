import json

import numpy as np
import pytest

from dynsbm import io
from dynsbm.cli import main
from dynsbm.ekf import FilterState
from dynsbm.exceptions import ParseError
from dynsbm.simgen import SimParams, generate


def _write(path, text):
    path.write_text(text)
    return path


def test_parse_two_snapshots(tmp_path):
    f = _write(tmp_path / "s.tsv", "1\t0\t1\n1\t1\t0\n2\t0\t1\n")
    snaps, nodes = io.read_snapshots(f)
    assert [s.n_edges for s in snaps] == [2, 1]
    assert nodes.labels == ["0", "1"]


def test_parse_self_edge_names_line(tmp_path):
    f = _write(tmp_path / "s.tsv", "1\t3\t3\n")
    with pytest.raises(ValueError, match="line 1"):
        io.read_snapshots(f)


def test_parse_malformed_line(tmp_path):
    f = _write(tmp_path / "s.tsv", "# header\n1\t0\t1\n2\t0\n")
    with pytest.raises(ParseError, match="line 3"):
        io.read_snapshots(f)
    f = _write(tmp_path / "s.tsv", "1\tx\t1\n")
    with pytest.raises(ParseError, match="line 1"):
        io.read_snapshots(f)


def test_parse_gap_inserts_empty_snapshot(tmp_path, caplog):
    f = _write(tmp_path / "s.tsv", "3\t10\t20\n5\t20\t10\n")
    snaps, nodes = io.read_snapshots(f)
    assert [s.t for s in snaps] == [1, 2, 3]
    assert [s.n_edges for s in snaps] == [1, 0, 1]
    assert "no edges" in caplog.text
    assert nodes["10"] == 0 and nodes["20"] == 1


def test_parse_deduplicates(tmp_path):
    f = _write(tmp_path / "s.tsv", "1\t0\t1\n1\t0\t1\n")
    snaps, _ = io.read_snapshots(f)
    assert snaps[0].n_edges == 1


@pytest.mark.parametrize("directed", [True, False])
def test_snapshot_round_trip(tmp_path, directed):
    snaps, truth = generate(SimParams(seed=1, directed=directed, T=3))
    io.write_snapshots(tmp_path / "s.tsv", snaps)
    back, nodes = io.read_snapshots(tmp_path / "s.tsv", directed=directed)
    ids = np.array([int(lab) for lab in nodes.labels])
    for a, b in zip(snaps, back):
        orig = {tuple(e) for e in a.edges.tolist()}
        got = {(int(ids[i]), int(ids[j])) for i, j in b.edges.tolist()}
        assert orig == got


def test_membership_round_trip(tmp_path):
    snaps, truth = generate(SimParams(seed=2, T=3))
    io.write_snapshots(tmp_path / "s.tsv", snaps)
    io.write_memberships(tmp_path / "m.tsv", truth.assignments)
    back, nodes = io.read_snapshots(tmp_path / "s.tsv", directed=False)
    got = io.read_memberships(tmp_path / "m.tsv", nodes, T=3)
    for a, b in zip(truth.assignments, got):
        ids = np.array([int(lab) for lab in nodes.labels])
        assert np.array_equal(a.labels[ids], b.labels)


def test_fixed_memberships(tmp_path):
    _write(tmp_path / "s.tsv", "1\t1\t2\n1\t3\t4\n2\t2\t1\n")
    snaps, nodes = io.read_snapshots(tmp_path / "s.tsv")
    _write(tmp_path / "m.tsv", "1\t7\n2\t7\n3\t9\n4\t9\n")
    got = io.read_memberships(tmp_path / "m.tsv", nodes, T=2)
    assert len(got) == 2
    assert got[0].labels.tolist() == [0, 0, 1, 1]


def test_estimates_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    states = [FilterState(rng.normal(size=4), 0.1 * A @ A.T + 0.01 * np.eye(4)) for _ in range(3)]
    io.write_estimates(tmp_path / "e.csv", states)
    back = io.read_estimates(tmp_path / "e.csv")
    rows = io.estimate_records(states)
    for j, name in enumerate(io.ESTIMATE_HEADER[3:], start=3):
        expected = np.array([float(f"{r[j]:.10g}") for r in rows])
        assert np.array_equal(back[name], expected)
    assert np.all(back["ci_low"] <= back["theta_hat"])
    assert np.all(back["theta_hat"] <= back["ci_high"])


def test_cli_pipeline(tmp_path, capsys):
    sim, fa, ev = tmp_path / "sim", tmp_path / "fa", tmp_path / "ev"
    assert main(["simulate", "--out", str(sim), "--seed", "1", "--steps", "4"]) == 0
    assert main(["fit", "--input", str(sim / "snapshots.tsv"), "--memberships", str(sim / "memberships.tsv"),
                 "--out", str(fa)]) == 0
    assert main(["eval", "--input", str(fa / "estimates.csv"), "--truth", str(sim / "truth.json"),
                 "--out", str(ev)]) == 0
    report = json.loads((ev / "eval.json").read_text())
    assert np.isfinite(report["mse_logit"])
    manifest = json.loads((fa / "manifest.json").read_text())
    assert manifest["version"] == "0.1.0"
    assert manifest["seed"] == 0


def test_cli_aposteriori_fit_and_eval(tmp_path):
    sim, fp, ev = tmp_path / "sim", tmp_path / "fp", tmp_path / "ev"
    main(["simulate", "--out", str(sim), "--seed", "2", "--steps", "3"])
    assert main(["fit", "--mode", "aposteriori", "--k", "4", "--input", str(sim / "snapshots.tsv"),
                 "--out", str(fp)]) == 0
    assert main(["eval", "--input", str(fp / "estimates.csv"), "--truth", str(sim / "truth.json"),
                 "--memberships", str(sim / "memberships.tsv"), "--assignments", str(fp / "assignments.csv"),
                 "--out", str(ev)]) == 0
    report = json.loads((ev / "eval.json").read_text())
    assert report["mean_ari"] > 0.5
    assert report["mse_logit_aligned"] <= report["mse_logit"]


def test_cli_mode_consistency(tmp_path, capsys):
    sim = tmp_path / "sim"
    main(["simulate", "--out", str(sim), "--steps", "3"])
    assert main(["fit", "--input", str(sim / "snapshots.tsv"), "--out", str(tmp_path / "x")]) != 0
    assert "memberships" in capsys.readouterr().err
    assert main(["fit", "--mode", "aposteriori", "--k", "4", "--input", str(sim / "snapshots.tsv"),
                 "--memberships", str(sim / "memberships.tsv"), "--out", str(tmp_path / "y")]) != 0


def test_cli_tune_predict(tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--out", str(sim), "--seed", "3"])
    args = ["--input", str(sim / "snapshots.tsv"), "--memberships", str(sim / "memberships.tsv")]
    assert main(["tune", *args, "--grid", "0.01:0.0025,0.1:0.0", "--out", str(tmp_path / "t")]) == 0
    tuned = json.loads((tmp_path / "t" / "tune.json").read_text())
    assert (tuned["s_diag"], tuned["s_nb"]) in [(0.01, 0.0025), (0.1, 0.0)]
    assert main(["predict", *args, "--lambda", "0.25", "--w-block", "0,1", "--out", str(tmp_path / "p")]) == 0
    auc = json.loads((tmp_path / "p" / "auc.json").read_text())
    assert auc["lambda_blend"] == 0.25
    lines = (tmp_path / "p" / "scores.csv").read_text().splitlines()
    assert lines[0] == "src,dst,score"


def test_cli_replicate_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["replicate", "--runs", "2", "--seed", "5", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "replicate.json").read_bytes()
    assert a == (tmp_path / "b" / "replicate.json").read_bytes()


def test_cli_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DYNSBM_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--steps", "2"]) == 0
    assert (tmp_path / "env" / "snapshots.tsv").exists()


def test_cli_bad_grid(tmp_path):
    with pytest.raises(SystemExit):
        main(["tune", "--input", "x", "--grid", "0.1", "--out", str(tmp_path)])
