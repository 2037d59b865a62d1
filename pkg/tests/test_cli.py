from __future__ import annotations

import csv
import json

import pytest

from speckle_auth.cli import EXIT_ERROR, EXIT_OK, EXIT_REJECT, main


@pytest.fixture(scope="module")
def datasets(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "4", "--seed", "5", "--t1-noise", "default", "--out", str(root / "t0")]) == EXIT_OK
    assert main(["enroll", "--db", str(root / "t0")]) == EXIT_OK
    return root


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_synth_rejects_zero(tmp_path):
    assert main(["synth", "--n", "0", "--out", str(tmp_path / "x")]) == EXIT_ERROR


def test_unknown_command_and_version(capsys):
    assert main(["nope"]) == EXIT_ERROR
    assert main(["--version"]) == EXIT_OK
    assert "0.1.0" in capsys.readouterr().out


def test_t1_sibling_shares_challenges(datasets):
    m0 = json.loads((datasets / "t0" / "manifest.json").read_text())
    m1 = json.loads((datasets / "t0_t1" / "manifest.json").read_text())
    assert [r["challenge_seed"] for r in m0["records"]] == [r["challenge_seed"] for r in m1["records"]]
    assert m0["seeds"]["acquisition"] + 1 == m1["seeds"]["acquisition"]
    assert "enrollment" in m0 and "enrollment" not in m1


def test_verify_exit_codes(datasets, tmp_path):
    m0 = json.loads((datasets / "t0" / "manifest.json").read_text())
    probe = str(datasets / "t0_t1" / m0["records"][1]["response"])
    ids = [r["id"] for r in m0["records"]]
    db = str(datasets / "t0")
    assert main(["verify", "--db", db, "--probe", probe, "--id", str(ids[1]), "--out", str(tmp_path)]) == EXIT_OK
    line = json.loads((tmp_path / "decisions.jsonl").read_text().splitlines()[0])
    assert line["accepted"] and line["match_count"] >= 100
    assert main(["verify", "--db", db, "--probe", probe, "--id", str(ids[2])]) == EXIT_REJECT
    assert main(["verify", "--db", str(tmp_path / "missing"), "--probe", probe, "--id", "0"]) == EXIT_ERROR
    assert main(["verify", "--db", db, "--probe", probe, "--id", "99999"]) == EXIT_ERROR


def test_identify_outputs(datasets, tmp_path):
    m0 = json.loads((datasets / "t0" / "manifest.json").read_text())
    probe = str(datasets / "t0_t1" / m0["records"][3]["response"])
    assert main(["identify", "--db", str(datasets / "t0"), "--probe", probe, "--out", str(tmp_path)]) == EXIT_OK
    res = json.loads((tmp_path / "identify.jsonl").read_text())
    assert res["identified_id"] == m0["records"][3]["id"]
    assert _rows(tmp_path / "identify.csv")[0] == ["entry_id", "count"]


def test_matrix_outputs(tmp_path):
    assert main(["matrix", "--n", "20", "--out", str(tmp_path)]) == EXIT_OK
    for md in ("0.5", "0.7", "0.9"):
        rows = _rows(tmp_path / f"matrix_md{md}.csv")
        assert len(rows) == 21 and all(len(r) == 21 for r in rows)
    summary = json.loads((tmp_path / "matrix_summary.json").read_text())
    assert summary["0.7"]["diagonal_min"] > 10 * summary["0.7"]["off_diagonal_max"]


def test_fhd_outputs_and_mismatch(datasets, tmp_path):
    t0, t1 = str(datasets / "t0"), str(datasets / "t0_t1")
    assert main(["fhd", t0, t1, "--bins", "20", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "fhd_histogram.csv")
    assert rows[0] == ["bin_center", "like_count", "unlike_count", "ideal_like_count"]
    assert len(rows) == 21
    assert sum(int(r[1]) for r in rows[1:]) == 4
    assert sum(int(r[2]) for r in rows[1:]) == 12
    main(["synth", "--n", "3", "--out", str(tmp_path / "three")])
    assert main(["fhd", t0, str(tmp_path / "three"), "--out", str(tmp_path / "x")]) == EXIT_ERROR


def test_bench_header(tmp_path):
    assert main(["bench", "--db", "3", "--threads", "1,2", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "bench.csv")
    assert rows[0] == ["threads", "seconds_total", "micros_per_comparison"]
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert json.loads((tmp_path / "bench.json").read_text())["counts_identical"]


def test_invalid_thread_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SPECKLE_AUTH_THREADS", "zero")
    assert main(["synth", "--n", "1", "--out", str(tmp_path)]) == EXIT_ERROR
    monkeypatch.setenv("SPECKLE_AUTH_THREADS", "0")
    assert main(["synth", "--n", "1", "--out", str(tmp_path)]) == EXIT_ERROR


def test_outputs_use_lf(datasets, tmp_path):
    main(["fhd", str(datasets / "t0"), str(datasets / "t0_t1"), "--out", str(tmp_path)])
    for p in tmp_path.iterdir():
        assert b"\r" not in p.read_bytes(), p.name


def test_rerun_reproduces_outputs(datasets, tmp_path):
    a = tmp_path / "a"
    assert main(["rotate", "--db", str(datasets / "t0"), "--n", "3", "--angles", "0,45", "--out", str(a)]) == EXIT_OK
    b = tmp_path / "b"
    assert main(["rerun", str(a / "run.json"), "--out", str(b)]) == EXIT_OK
    for name in ("rotation.csv", "rotation.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    echo_a = json.loads((a / "run.json").read_text())["args"]
    echo_b = json.loads((b / "run.json").read_text())["args"]
    assert echo_a.pop("out") != echo_b.pop("out")
    assert echo_a == echo_b


def test_rerun_rejects_bad_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"args": {"command": "rerun"}}))
    assert main(["rerun", str(path)]) == EXIT_ERROR
    path.write_text(json.dumps({"args": {"command": "launch"}}))
    assert main(["rerun", str(path)]) == EXIT_ERROR
