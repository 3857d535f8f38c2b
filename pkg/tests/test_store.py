"""Workspace layout, manifest hashing and catalog streaming."""
import json
import time

import pytest

from sarwind.store import (
    SUBDIRS,
    Workspace,
    atomic_write_json,
    atomic_write_text,
    sha256_file,
    summarize_catalog,
    verify_workspace,
)


def test_layout_creates_all_subdirs(tmp_path):
    ws = Workspace(tmp_path / "w").ensure_layout()
    for sub in SUBDIRS:
        assert ws.path(sub).is_dir()


def test_atomic_write_replaces_content(tmp_path):
    p = tmp_path / "x.txt"
    atomic_write_text(p, "one\n")
    atomic_write_text(p, "two\n")
    assert p.read_text() == "two\n"
    assert list(tmp_path.iterdir()) == [p]  # no temp files left behind


def test_atomic_json_is_stable(tmp_path):
    p = tmp_path / "x.json"
    atomic_write_json(p, {"b": 1, "a": 2})
    atomic_write_json(tmp_path / "y.json", {"a": 2, "b": 1})
    assert p.read_bytes() == (tmp_path / "y.json").read_bytes()  # key-sorted


def test_sha256_matches_hashlib(tmp_path):
    import hashlib

    p = tmp_path / "blob"
    p.write_bytes(b"abc" * 100000)
    assert sha256_file(p) == hashlib.sha256(b"abc" * 100000).hexdigest()


def _seed_workspace(tmp_path):
    ws = Workspace(tmp_path / "w").ensure_layout()
    (ws.path("scenes", "s0")).mkdir()
    (ws.path("scenes", "s0", "meta.json")).write_text("{}\n")
    (ws.path("scenes", "s0", "a.f32")).write_bytes(b"\x00" * 64)
    (ws.path("stats", "stats.json")).write_text("{}\n")
    ws.write_manifest(config={"seed": 1})
    return ws


def test_manifest_full_rescan_lists_everything(tmp_path):
    ws = _seed_workspace(tmp_path)
    m = ws.load_manifest()
    assert m["config"]["seed"] == 1
    assert set(m["artifacts"]) == {
        "scenes/s0/meta.json", "scenes/s0/a.f32", "stats/stats.json",
    }


def test_manifest_incremental_update_and_stale_cleanup(tmp_path):
    ws = _seed_workspace(tmp_path)
    new = ws.path("stats", "extra.json")
    new.write_text("{}\n")
    (ws.path("stats", "stats.json")).unlink()
    ws.write_manifest(full_rescan=False, updated_paths=[new])
    m = ws.load_manifest()
    assert "stats/extra.json" in m["artifacts"]
    assert "stats/stats.json" not in m["artifacts"]  # dropped as stale


def test_verify_detects_flipped_byte(tmp_path):
    ws = _seed_workspace(tmp_path)
    assert verify_workspace(ws.root)["passed"]
    blob = ws.path("scenes", "s0", "a.f32")
    raw = bytearray(blob.read_bytes())
    raw[10] ^= 0xFF
    blob.write_bytes(bytes(raw))
    report = verify_workspace(ws.root)
    assert not report["passed"]
    assert any("a.f32" in p for p in report["problems"])


def test_verify_detects_missing_file(tmp_path):
    ws = _seed_workspace(tmp_path)
    ws.path("stats", "stats.json").unlink()
    report = verify_workspace(ws.root)
    assert any("missing" in p for p in report["problems"])


def test_verify_empty_workspace_fails(tmp_path):
    report = verify_workspace(tmp_path)
    assert not report["passed"]


def test_verify_cross_checks_catalog_against_split(tmp_path):
    ws = _seed_workspace(tmp_path)
    rows = [
        {"scene_id": "s0", "row0": 0, "col0": 0, "class": "rain", "subset": "train"},
        {"scene_id": "s1", "row0": 0, "col0": 0, "class": "rain", "subset": "test"},
    ]
    atomic_write_text(ws.path("patches", "patches.jsonl"),
                      "\n".join(json.dumps(r) for r in rows) + "\n")
    atomic_write_json(ws.path("splits", "assignment.json"),
                      {"val": [], "test": ["s0"]})  # contradicts row 0
    ws.write_manifest()
    report = verify_workspace(ws.root)
    assert not report["passed"]
    assert any("contradicts" in p for p in report["problems"])


def test_summarize_counts(tmp_path):
    rows = [
        {"scene_id": "a", "class": "rain", "subset": "train"},
        {"scene_id": "a", "class": "rainless", "subset": None},
        {"scene_id": "b", "class": "discarded"},
    ]
    p = tmp_path / "patches.jsonl"
    p.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    out = summarize_catalog(p)
    assert out["rows"] == 3
    assert out["classes"] == {"rain": 1, "rainless": 1, "discarded": 1}
    assert out["subsets"] == {"train": 1}


@pytest.mark.slow
def test_summarize_streams_millions_of_rows_quickly(tmp_path):
    p = tmp_path / "big.jsonl"
    line = json.dumps({"scene_id": "s", "class": "rainless", "subset": "train"})
    with open(p, "w") as f:
        chunk = (line + "\n") * 10000
        for _ in range(220):
            f.write(chunk)
    t0 = time.perf_counter()
    out = summarize_catalog(p)
    dt = time.perf_counter() - t0
    assert out["rows"] == 2_200_000
    assert dt < 10.0
