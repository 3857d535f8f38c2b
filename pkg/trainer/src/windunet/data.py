"""Patch loading and batch sampling for training.

Training corpora from the wind pipeline are small enough (a few hundred
256x256 tiles) to hold in RAM as float32, so everything is loaded up
front: inputs are standardised with the pipeline's train-split statistics,
labels are kept in physical units (m/s), and batches are cut as random
crops so a step sees varied sub-tiles.
"""

from dataclasses import dataclass

import numpy as np

from . import formats
from .variants import LABEL_CHANNEL, VariantSpec


@dataclass
class PatchSet:
    """In-memory training array pair.

    features: (n, c, size, size) float32, standardised per channel
    labels:   (n, size, size) float32, raw wind speed
    """
    features: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.features)

    @property
    def size(self):
        return self.features.shape[-1]


def load_patches(workspace, variant: VariantSpec, subset="train",
                 stats=None) -> PatchSet:
    """Load every catalogued patch of one split subset.

    Raises ValueError when the patch store or the statistics file lacks a
    channel the variant needs -- better to stop here than to train on
    garbage.
    """
    meta = formats.read_patch_meta(workspace)
    formats.ensure_channels(list(variant.channels) + [LABEL_CHANNEL],
                            meta["channels"], "patch store")
    if stats is None:
        stats = formats.read_stats(workspace)
    formats.ensure_channels(variant.channels, stats, "stats.json")

    rows = [r for r in formats.iter_catalog(workspace)
            if r.get("subset") == subset]
    if not rows:
        raise ValueError(f"no patches assigned to subset {subset!r}; "
                         "run the split stage first")

    size = meta["size"]
    n, c = len(rows), variant.in_channels
    features = np.empty((n, c, size, size), dtype=np.float32)
    labels = np.empty((n, size, size), dtype=np.float32)
    for i, row in enumerate(rows):
        cube = formats.read_patch(workspace, row, meta)
        for j, name in enumerate(variant.channels):
            mean, std = stats[name]
            features[i, j] = (cube[name] - mean) / std
        labels[i] = cube[LABEL_CHANNEL]
    # dead pixels (fill values) carry no signal; zero is the standardised mean
    np.nan_to_num(features, copy=False, nan=0.0, posinf=0.0, neginf=0.0)
    return PatchSet(features=features, labels=labels)


def sample_batch(patches: PatchSet, rng: np.random.Generator, batch: int,
                 crop: int):
    """Random patches, random aligned crops: (b,c,crop,crop), (b,1,crop,crop)."""
    size = patches.size
    if not 1 <= crop <= size:
        raise ValueError(f"crop {crop} outside 1..{size}")
    idx = rng.integers(0, len(patches), size=batch)
    r0 = rng.integers(0, size - crop + 1, size=batch)
    c0 = rng.integers(0, size - crop + 1, size=batch)
    x = np.empty((batch, patches.features.shape[1], crop, crop),
                 dtype=np.float32)
    y = np.empty((batch, 1, crop, crop), dtype=np.float32)
    for k in range(batch):
        i, r, c = idx[k], r0[k], c0[k]
        x[k] = patches.features[i, :, r:r + crop, c:c + crop]
        y[k, 0] = patches.labels[i, r:r + crop, c:c + crop]
    return x, y
