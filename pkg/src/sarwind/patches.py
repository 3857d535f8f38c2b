"""Tiling scenes into 256x256 patches, rain classification, and the
model-agreement filter.

A patch is "rain" when strictly more than 5% of its valid surface sits at
rain class >= 2 (>= 3 mm/h), "rainless" when no pixel shows any rain
signature at all (class >= 1), and "discarded" otherwise.  On top of that,
patches whose atmospheric-model and GMF winds disagree too much over the
rain-free pixels (delta >= 1 (m/s)^2) are discarded as unreliable.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scene import Grid2D, Scene

PATCH_SIZE = 256
RAIN_FRACTION_THRESHOLD = 0.05
RAIN_CLASS_MIN = 2  # class 2 == [3, 10) mm/h: the >= 3 mm/h partition
DELTA_THRESHOLD = 1.0  # (m/s)^2


@dataclass
class RainPartition:
    """Exact partition of a grid's valid pixels into rain / not-rain."""

    a_plus: np.ndarray  # boolean, rain class >= 2 (>= 3 mm/h)
    a_minus: np.ndarray  # boolean, complement over valid pixels


def partition_rain(rain_class: Grid2D | np.ndarray) -> RainPartition:
    """Split valid pixels at the 3 mm/h boundary (class >= 2)."""
    v = rain_class.values if isinstance(rain_class, Grid2D) else np.asarray(rain_class)
    valid = ~np.isnan(v)
    if not np.all(np.isin(v[valid], (0.0, 1.0, 2.0, 3.0))):
        raise ValueError("rain_class values must be in {0,1,2,3}")
    a_plus = valid & (v >= RAIN_CLASS_MIN)
    return RainPartition(a_plus=a_plus, a_minus=valid & ~a_plus)


@dataclass
class Patch:
    """One 256x256 tile of a scene with its classification bookkeeping."""

    scene_id: str
    row0: int
    col0: int
    channels: dict[str, np.ndarray] = field(repr=False)
    rain_fraction_3mm: float = 0.0
    delta: float | None = None
    category: str = "discarded"  # {rain, rainless, discarded}
    size: int = PATCH_SIZE

    @property
    def id(self) -> str:
        return f"{self.scene_id}_{self.row0}_{self.col0}"

    @property
    def rainless(self) -> bool:
        return self.category == "rainless"

    @property
    def label_wind(self) -> np.ndarray:
        return self.channels["wspd_model"]

    @property
    def mean_label_wind(self) -> float:
        return float(np.nanmean(self.label_wind))


def classify_patch(rain_class: np.ndarray, part: RainPartition | None = None):
    """Classify a tile from its rain-class grid alone.

    Returns (category, rain_fraction): "rain" iff the >=3 mm/h fraction of
    valid pixels strictly exceeds 5%; "rainless" iff no valid pixel has any
    rain signature (class >= 1); everything in between is "discarded".
    """
    if part is None:
        part = partition_rain(rain_class)
    n_valid = int(part.a_plus.sum() + part.a_minus.sum())
    if n_valid == 0:
        return "discarded", 0.0
    fraction = float(part.a_plus.sum()) / n_valid
    if fraction > RAIN_FRACTION_THRESHOLD:
        return "rain", fraction
    v = rain_class.values if isinstance(rain_class, Grid2D) else np.asarray(rain_class)
    any_signature = bool(np.any(v[~np.isnan(v)] >= 1))
    if not any_signature:
        return "rainless", fraction
    return "discarded", fraction


def delta_rainless(wspd_model, wspd_gmf, part: RainPartition):
    """Mean squared model-vs-GMF disagreement over the rain-free pixels.

    Returns None (undefined) when no rain-free pixel has both winds finite;
    callers treat that as a discard.
    """
    m = wspd_model.values if isinstance(wspd_model, Grid2D) else np.asarray(wspd_model)
    g = wspd_gmf.values if isinstance(wspd_gmf, Grid2D) else np.asarray(wspd_gmf)
    if m.shape != g.shape or m.shape != part.a_minus.shape:
        raise ValueError("wind grids and partition must share dimensions")
    mask = part.a_minus & np.isfinite(m) & np.isfinite(g)
    if not np.any(mask):
        return None
    d = m[mask] - g[mask]
    return float(np.mean(d * d))


def filter_by_delta(delta, threshold: float = DELTA_THRESHOLD) -> bool:
    """Keep rule: defined and strictly below the threshold."""
    return delta is not None and delta < threshold


def extract_patches(scene: Scene, stride: int = PATCH_SIZE, size: int = PATCH_SIZE):
    """Cut a scene into non-overlapping tiles from the top-left corner.

    Partial edge tiles are dropped.  Each tile is classified by its rain
    masks and then demoted to "discarded" when the delta filter rejects it,
    so every returned rain/rainless patch already satisfies delta < 1.
    Requires the rain_class, wspd_model and wspd_gmf channels.
    """
    if scene.rows < size or scene.cols < size:
        warnings.warn(
            f"scene {scene.id} ({scene.rows}x{scene.cols}) smaller than one "
            f"{size}x{size} tile; no patches extracted"
        )
        return []
    for name in ("rain_class", "wspd_model", "wspd_gmf"):
        if name not in scene.channels:
            raise ValueError(f"scene {scene.id} lacks channel {name}")

    out = []
    for r0 in range(0, scene.rows - size + 1, stride):
        for c0 in range(0, scene.cols - size + 1, stride):
            channels = {
                name: grid.values[r0 : r0 + size, c0 : c0 + size].copy()
                for name, grid in scene.channels.items()
            }
            part = partition_rain(channels["rain_class"])
            category, fraction = classify_patch(channels["rain_class"], part)
            delta = delta_rainless(channels["wspd_model"], channels["wspd_gmf"], part)
            if category != "discarded" and not filter_by_delta(delta):
                category = "discarded"
            out.append(
                Patch(
                    scene_id=scene.id,
                    row0=r0,
                    col0=c0,
                    channels=channels,
                    rain_fraction_3mm=fraction,
                    delta=delta,
                    category=category,
                    size=size,
                )
            )
    return out


# ---------------------------------------------------------------------------
# patch store: <scene_id>_<row0>_<col0>.f32 blobs (channel-major, little-endian
# float32) plus a JSON-lines catalog


def catalog_row(p: Patch) -> dict:
    return {
        "scene_id": p.scene_id,
        "row0": p.row0,
        "col0": p.col0,
        "class": p.category,
        "rain_fraction": p.rain_fraction_3mm,
        "delta": p.delta,
        "mean_label_wind": p.mean_label_wind,
    }


def write_patch_meta(directory, size, channel_order):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"size": size, "channels": list(channel_order)}
    (d / "patches_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def write_patch_blob(p: Patch, directory, channel_order) -> Path:
    """Write one patch as channel-major little-endian float32."""
    planes = [np.ascontiguousarray(p.channels[name], dtype="<f4")
              for name in channel_order]
    path = Path(directory) / f"{p.id}.f32"
    path.write_bytes(b"".join(a.tobytes() for a in planes))
    return path


def write_patches(patches, directory, channel_order=None):
    """Write kept patches as raw blobs plus a catalog covering every tile.

    Blobs are written only for rain/rainless patches (the ones any consumer
    trains or evaluates on); discarded tiles still get a catalog row so the
    bookkeeping stays auditable.  `patches_meta.json` records the blob
    layout (size and channel order).
    """
    d = Path(directory)
    if not patches:
        raise ValueError("no patches to write")
    if channel_order is None:
        channel_order = sorted(patches[0].channels)
    write_patch_meta(d, patches[0].size, channel_order)
    lines = []
    for p in patches:
        if p.category != "discarded":
            write_patch_blob(p, d, channel_order)
        lines.append(json.dumps(catalog_row(p), sort_keys=True))
    (d / "patches.jsonl").write_text("\n".join(lines) + "\n")
    return d


def read_patch_blob(path, meta) -> dict:
    """Read one .f32 blob back into named float64 planes."""
    size = meta["size"]
    names = meta["channels"]
    raw = Path(path).read_bytes()
    arr = np.frombuffer(raw, dtype="<f4")
    expected = size * size * len(names)
    if arr.size != expected:
        raise ValueError(f"{path}: {arr.size} values, expected {expected}")
    planes = arr.reshape(len(names), size, size).astype(np.float64)
    return {name: planes[i] for i, name in enumerate(names)}


def read_catalog(directory):
    """Load patches.jsonl as a list of dict rows."""
    path = Path(directory) / "patches.jsonl"
    return [json.loads(line) for line in path.read_text().splitlines() if line]


class PatchRef:
    """Catalog-row stand-in for a Patch: just the fields balancing and
    splitting need, without the pixel data."""

    __slots__ = ("scene_id", "row0", "col0", "category", "mean_label_wind")

    def __init__(self, scene_id, row0, col0, category, mean_label_wind):
        self.scene_id = scene_id
        self.row0 = row0
        self.col0 = col0
        self.category = category
        self.mean_label_wind = mean_label_wind

    @property
    def id(self):
        return f"{self.scene_id}_{self.row0}_{self.col0}"

    @classmethod
    def from_row(cls, row):
        return cls(row["scene_id"], row["row0"], row["col0"], row["class"],
                   row["mean_label_wind"])
