"""Workspace layout, manifest hashing, and integrity verification.

A workspace is a plain directory tree:

    workspace/
      scenes/<scene_id>/meta.json + <channel>.f32
      patches/patches_meta.json, patches.jsonl, <patch_id>.f32
      plans/balance.json (+ histograms.csv)
      splits/assignment.json
      stats/stats.json
      reports/*.json|.txt|.csv
      manifest.json

The manifest maps every artifact's workspace-relative path to its sha256.
Nothing in the tree carries wall-clock timestamps, so a rebuild with the
same config and seeds is byte-identical, hash for hash.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from collections import Counter
from pathlib import Path

SUBDIRS = ("scenes", "patches", "plans", "splits", "stats", "reports")
MANIFEST_NAME = "manifest.json"


def sha256_file(path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(chunk)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


def atomic_write_text(path, text: str):
    """Write-rename so readers never see a half-written file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


class Workspace:
    """One dataset build: scenes through reports under a single root."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def ensure_layout(self):
        for sub in SUBDIRS:
            self.path(sub).mkdir(parents=True, exist_ok=True)
        return self

    def scene_dirs(self):
        base = self.path("scenes")
        if not base.exists():
            return []
        return sorted(d for d in base.iterdir() if (d / "meta.json").exists())

    # -- manifest ----------------------------------------------------------

    def _iter_artifacts(self):
        for sub in SUBDIRS:
            base = self.path(sub)
            if not base.exists():
                continue
            for p in sorted(base.rglob("*")):
                if p.is_file():
                    yield p

    def load_manifest(self) -> dict:
        p = self.path(MANIFEST_NAME)
        if not p.exists():
            return {"version": 1, "config": {}, "artifacts": {}}
        return json.loads(p.read_text())

    def write_manifest(self, config: dict | None = None, full_rescan: bool = True,
                       updated_paths=None) -> dict:
        """Refresh the manifest: hash everything (full_rescan) or just the
        given paths, dropping entries for files that no longer exist."""
        manifest = self.load_manifest()
        if config:
            manifest["config"].update(config)
        artifacts = manifest.setdefault("artifacts", {})
        if full_rescan:
            artifacts.clear()
            for p in self._iter_artifacts():
                artifacts[p.relative_to(self.root).as_posix()] = sha256_file(p)
        else:
            for p in updated_paths or []:
                p = Path(p)
                artifacts[p.relative_to(self.root).as_posix()] = sha256_file(p)
            stale = [k for k in artifacts if not (self.root / k).exists()]
            for k in stale:
                del artifacts[k]
        atomic_write_json(self.path(MANIFEST_NAME), manifest)
        return manifest


def summarize_catalog(path) -> dict:
    """Stream a patches.jsonl catalog: class and subset counts.

    Built to stay fast on multi-million-row catalogs (one json.loads per
    line, Counter aggregation, nothing retained).
    """
    classes = Counter()
    subsets = Counter()
    n = 0
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            n += 1
            classes[row.get("class", "?")] += 1
            s = row.get("subset")
            if s is not None:
                subsets[s] += 1
    return {"rows": n, "classes": dict(classes), "subsets": dict(subsets)}


def verify_workspace(root) -> dict:
    """Recompute artifact hashes and cross-check catalog vs. split counts.

    Returns {passed, problems:[...], checked: n}; every mismatched or
    missing file is named.
    """
    ws = Workspace(root)
    manifest = ws.load_manifest()
    problems = []
    artifacts = manifest.get("artifacts", {})
    if not artifacts:
        problems.append("manifest lists no artifacts (run the pipeline first)")
    for rel, expected in sorted(artifacts.items()):
        p = ws.root / rel
        if not p.exists():
            problems.append(f"missing artifact: {rel}")
            continue
        actual = sha256_file(p)
        if actual != expected:
            problems.append(f"hash mismatch: {rel}")

    catalog = ws.path("patches", "patches.jsonl")
    assignment_path = ws.path("splits", "assignment.json")
    if catalog.exists() and assignment_path.exists():
        summary = summarize_catalog(catalog)
        assignment = json.loads(assignment_path.read_text())
        val_scenes = set(assignment.get("val", []))
        test_scenes = set(assignment.get("test", []))
        by_subset = Counter()
        with open(catalog) as f:
            for line in f:
                if not line.strip():
                    continue
                row = json.loads(line)
                s = row.get("subset")
                if s is None:
                    continue
                scene = row["scene_id"]
                expected = ("val" if scene in val_scenes
                            else "test" if scene in test_scenes else "train")
                if s != expected:
                    problems.append(
                        f"catalog subset {s} contradicts assignment for {scene}"
                    )
                by_subset[s] += 1
        for k, v in by_subset.items():
            if summary["subsets"].get(k, 0) != v:
                problems.append(f"subset count self-check failed for {k}")

    return {"passed": not problems, "problems": problems,
            "checked": len(artifacts)}
