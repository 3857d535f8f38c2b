"""Adam/MSE training loop with reproducible seeding and checkpointing.

The defaults mirror the full-size recipe (1e5 steps, batch 16, lr 1e-5,
whole 256-pixel patches).  That takes GPU-days; the "desk" preset is a
configuration of the same loop that fits a single CPU core in minutes and
is what the end-to-end tests train with.
"""

from dataclasses import dataclass, replace

import numpy as np
import torch

from . import formats
from .data import load_patches, sample_batch
from .model import UNet
from .variants import VariantSpec, get_variant


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 100_000
    batch: int = 16
    lr: float = 1e-5
    crop: int = 256   # crop size fed to the net; <= patch size
    base: int = 32    # first-level feature width
    log_every: int = 100


PRESETS = {
    "full": TrainConfig(),
    "desk": TrainConfig(steps=2000, batch=8, lr=1e-3, crop=128, base=8),
}


def masked_mse(pred, target):
    """Mean squared error, skipping non-finite label pixels if any."""
    mask = torch.isfinite(target)
    if mask.all():
        return ((pred - target) ** 2).mean()
    if not mask.any():
        raise ValueError("batch has no finite label pixels")
    diff = pred[mask] - target[mask]
    return (diff ** 2).mean()


def train(workspace, variant, config: TrainConfig | None = None, seed=0,
          out=None, log=print):
    """Train one model on the workspace's train split.

    Returns (model, history) where history is [(step, loss), ...] sampled
    every ``config.log_every`` steps.  With a fixed seed and single-thread
    CPU math the run is reproducible bit-for-bit.
    """
    if isinstance(variant, str):
        variant = get_variant(variant)
    if config is None:
        config = TrainConfig()

    stats = formats.read_stats(workspace)
    patches = load_patches(workspace, variant, "train", stats)
    if config.crop > patches.size:
        config = replace(config, crop=patches.size)

    torch.manual_seed(seed)
    model = UNet(variant.in_channels, base=config.base)
    # start the ReLU-clamped head at the label mean: with near-zero init the
    # clamp can zero every gradient on the first big step and the net never
    # recovers (it happily predicts 0 m/s forever)
    with torch.no_grad():
        model.head.bias.fill_(float(np.nanmean(patches.labels)))
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(seed)

    history = []
    model.train()
    for step in range(1, config.steps + 1):
        x, y = sample_batch(patches, rng, config.batch, config.crop)
        pred = model(torch.from_numpy(x))
        loss = masked_mse(pred, torch.from_numpy(y))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step == 1 or step % config.log_every == 0:
            history.append((step, loss.item()))
            if log:
                log(f"step {step:>6d}/{config.steps}  loss {loss.item():.4f}")
    model.eval()

    if out is not None:
        save_checkpoint(out, model, variant, config, stats, seed)
    return model, history


def save_checkpoint(path, model, variant: VariantSpec, config: TrainConfig,
                    stats, seed):
    """Weights plus everything prediction needs: variant, width, stats."""
    torch.save({
        "state_dict": model.state_dict(),
        "variant": variant.name,
        "base": config.base,
        "stats": {name: [float(m), float(s)] for name, (m, s) in stats.items()},
        "seed": int(seed),
        "steps": int(config.steps),
    }, path)


def load_checkpoint(path):
    """Rebuild the trained model; returns (model, variant, stats)."""
    obj = torch.load(path, map_location="cpu")
    variant = get_variant(obj["variant"])
    model = UNet(variant.in_channels, base=obj["base"])
    model.load_state_dict(obj["state_dict"])
    model.eval()
    stats = {name: (m, s) for name, (m, s) in obj["stats"].items()}
    return model, variant, stats
