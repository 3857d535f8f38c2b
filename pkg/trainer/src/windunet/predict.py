"""Whole-scene inference: pad, run once, crop, write back.

The net is fully convolutional, so a scene is predicted in a single
forward pass regardless of its size; sides are reflect-padded up to the
next multiple of 16 and the pad is cropped off afterwards.  Predictions
can be written back into the scene directory as a regular channel, which
makes them visible to the pipeline's evaluation stage like any other
wind raster.
"""

import numpy as np
import torch

from . import formats
from .train import load_checkpoint

GRID = 16  # the UNet's pooling stride: 2**depth


class AllFillError(ValueError):
    """Raised for scenes with no valid (finite) data in the input channels."""


def pad_to_grid(features: np.ndarray, step: int = GRID):
    """Reflect-pad (c, h, w) on the bottom/right so h, w divide ``step``."""
    _, h, w = features.shape
    ph = (-h) % step
    pw = (-w) % step
    if ph or pw:
        features = np.pad(features, ((0, 0), (0, ph), (0, pw)),
                          mode="reflect")
    return features, (h, w)


def predict_array(model, features: np.ndarray) -> np.ndarray:
    """Standardised (c, h, w) stack -> (h, w) wind field, >= 0 everywhere."""
    padded, (h, w) = pad_to_grid(np.asarray(features, dtype=np.float32))
    with torch.no_grad():
        out = model(torch.from_numpy(padded[None]))
    return out[0, 0, :h, :w].numpy()


def predict_scene(scene_dir, model, variant, stats, out_channel=None):
    """Predict one scene; optionally store the result as ``out_channel``.

    Returns (wind, touched_paths).  Scenes whose inputs are entirely
    fill/invalid raise AllFillError instead of producing a fabricated
    wind field.
    """
    meta = formats.read_scene_meta(scene_dir)
    formats.ensure_channels(variant.channels, meta["channels"],
                            f"scene {meta['id']}")
    stack = np.stack([formats.read_channel(scene_dir, name, meta)
                      for name in variant.channels])
    if not np.isfinite(stack).any():
        raise AllFillError(f"scene {meta['id']} has no valid data in "
                           f"{list(variant.channels)}; not predicting")
    for j, name in enumerate(variant.channels):
        mean, std = stats[name]
        stack[j] = (stack[j] - mean) / std
    np.nan_to_num(stack, copy=False, nan=0.0, posinf=0.0, neginf=0.0)

    wind = predict_array(model, stack)
    touched = []
    if out_channel:
        touched = formats.write_channel(scene_dir, out_channel, wind)
    return wind, touched


def predict_workspace(workspace, checkpoint, subset="test",
                      out_channel="wspd_cnn", log=print):
    """Run a checkpoint over every scene of one split subset.

    ``subset`` is "train", "val", "test" or "all".  All-fill scenes are
    skipped (and reported), the manifest is refreshed for the files that
    were written, and a summary dict is returned.
    """
    model, variant, stats = load_checkpoint(checkpoint)
    assignment = formats.read_assignment(workspace)
    predicted, skipped, touched = [], [], []
    for scene_dir in formats.scene_dirs(workspace):
        scene_id = scene_dir.name
        if subset != "all" and formats.subset_of(assignment, scene_id) != subset:
            continue
        try:
            _, paths = predict_scene(scene_dir, model, variant, stats,
                                     out_channel=out_channel)
        except AllFillError as err:
            skipped.append(scene_id)
            if log:
                log(f"skipped: {err}")
            continue
        predicted.append(scene_id)
        touched.extend(paths)
    if touched:
        formats.update_manifest(workspace, touched)
    return {"channel": out_channel, "variant": variant.name,
            "predicted": predicted, "skipped": skipped}
