"""Readers and writers for sarwind workspace files.

The trainer talks to the wind pipeline purely through its on-disk layout:
scene directories (``meta.json`` plus one raw ``<name>.f32`` per channel),
the patch store (``patches_meta.json``, ``patches.jsonl``, channel-major
blobs), ``stats/stats.json`` and ``splits/assignment.json``.  Everything
here is reimplemented against those formats so this package never imports
``sarwind`` itself.

All raster data is little-endian float32, row-major.
"""

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

SCENES_DIR = "scenes"
PATCHES_DIR = "patches"
STATS_FILE = "stats/stats.json"
ASSIGNMENT_FILE = "splits/assignment.json"
MANIFEST_FILE = "manifest.json"


def _read_json(path):
    with open(path) as f:
        return json.load(f)


def _write_json(path, obj):
    """Write-rename with the pipeline's canonical JSON style (sorted keys,
    two-space indent, trailing newline) so rewritten files stay diffable."""
    path = Path(path)
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- scenes

def scene_dirs(workspace):
    """All scene directories in a workspace, sorted by scene id."""
    root = Path(workspace) / SCENES_DIR
    if not root.is_dir():
        raise FileNotFoundError(f"no {SCENES_DIR}/ under {workspace}")
    return sorted(p for p in root.iterdir() if (p / "meta.json").is_file())


def read_scene_meta(scene_dir):
    return _read_json(Path(scene_dir) / "meta.json")


def read_channel(scene_dir, name, meta=None):
    """Load one scene channel as a float32 (rows, cols) array."""
    scene_dir = Path(scene_dir)
    if meta is None:
        meta = read_scene_meta(scene_dir)
    path = scene_dir / f"{name}.f32"
    if not path.is_file():
        raise FileNotFoundError(f"scene {meta.get('id', scene_dir.name)} has no "
                                f"channel {name!r}")
    a = np.fromfile(path, dtype="<f4")
    rows, cols = meta["rows"], meta["cols"]
    if a.size != rows * cols:
        raise ValueError(f"{path} holds {a.size} values, expected "
                         f"{rows}x{cols}={rows * cols}")
    return a.reshape(rows, cols)


def write_channel(scene_dir, name, values):
    """Add or replace a scene channel, registering it in meta.json.

    Scene readers only load channels listed in ``meta["channels"]``, so the
    registry update is what makes the new raster visible to the rest of the
    pipeline.  Returns the paths that were (re)written.
    """
    scene_dir = Path(scene_dir)
    meta = read_scene_meta(scene_dir)
    values = np.asarray(values, dtype="<f4")
    if values.shape != (meta["rows"], meta["cols"]):
        raise ValueError(f"channel {name!r} shape {values.shape} does not match "
                         f"scene {meta['id']} ({meta['rows']}x{meta['cols']})")
    raster = scene_dir / f"{name}.f32"
    raster.write_bytes(np.ascontiguousarray(values).tobytes())
    touched = [raster]
    if name not in meta["channels"]:
        meta["channels"] = sorted(meta["channels"] + [name])
        _write_json(scene_dir / "meta.json", meta)
        touched.append(scene_dir / "meta.json")
    return touched


# ---------------------------------------------------------------- patches

def read_patch_meta(workspace):
    """Blob layout: {"size": N, "channels": [names in blob order]}."""
    return _read_json(Path(workspace) / PATCHES_DIR / "patches_meta.json")


def iter_catalog(workspace):
    """Yield catalog rows (dicts) from patches.jsonl, one per tile."""
    path = Path(workspace) / PATCHES_DIR / "patches.jsonl"
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_patch(workspace, row, meta=None):
    """Load one patch blob as {channel: float32 (size, size) array}.

    Blobs are channel-major in the order recorded by patches_meta.json.
    """
    if meta is None:
        meta = read_patch_meta(workspace)
    size, channels = meta["size"], meta["channels"]
    name = f"{row['scene_id']}_{row['row0']}_{row['col0']}.f32"
    path = Path(workspace) / PATCHES_DIR / name
    a = np.fromfile(path, dtype="<f4")
    expect = len(channels) * size * size
    if a.size != expect:
        raise ValueError(f"{path} holds {a.size} values, expected {expect}")
    cube = a.reshape(len(channels), size, size)
    return {ch: cube[i] for i, ch in enumerate(channels)}


# ------------------------------------------------------- stats and splits

def read_stats(workspace):
    """Per-channel normalisation constants: {channel: (mean, std)}."""
    obj = _read_json(Path(workspace) / STATS_FILE)
    return {name: (entry["mean"], entry["std"])
            for name, entry in obj["channels"].items()}


def read_assignment(workspace):
    """Scene-level split: {"val": [...ids], "test": [...ids]}; everything
    else is train."""
    obj = _read_json(Path(workspace) / ASSIGNMENT_FILE)
    return {"val": list(obj["val"]), "test": list(obj["test"])}


def subset_of(assignment, scene_id):
    if scene_id in assignment["val"]:
        return "val"
    if scene_id in assignment["test"]:
        return "test"
    return "train"


def ensure_channels(required, available, where):
    """Fail fast when a consumer asks for channels the store lacks."""
    missing = [c for c in required if c not in available]
    if missing:
        raise ValueError(f"{where} is missing channel(s) {missing}; "
                         f"available: {sorted(available)}")


# -------------------------------------------------------------- manifest

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def update_manifest(workspace, paths):
    """Refresh manifest hashes for files we touched, so the workspace still
    verifies after predictions are written into it.

    No-op when the workspace has no manifest yet.  Returns True if the
    manifest was rewritten.
    """
    workspace = Path(workspace)
    manifest_path = workspace / MANIFEST_FILE
    if not manifest_path.is_file():
        return False
    manifest = _read_json(manifest_path)
    artifacts = manifest.setdefault("artifacts", {})
    for p in paths:
        p = Path(p)
        artifacts[p.relative_to(workspace).as_posix()] = _sha256(p)
    _write_json(manifest_path, manifest)
    return True
