"""Per-channel normalization statistics over the training subset.

Accumulation is streaming: one (count, mean, M2) partial per patch, merged
with the standard pairwise update so the result does not depend (beyond
float round-off) on how the work was chunked.  Callers that need the result
bit-for-bit reproducible stream patches in sorted-id order.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np

#: channels the networks consume; the label (wspd_model) is deliberately
#: absent so it can never be normalized by accident
INPUT_CHANNELS = ("sigma0_vv", "sigma0_vh", "incidence", "wdir_prior", "wspd_gmf")


class Accumulator:
    """Streaming mean/variance partial (population convention)."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.count = 0.0
        self.mean = 0.0
        self.m2 = 0.0

    def add_array(self, values: np.ndarray):
        v = np.asarray(values, dtype=np.float64).ravel()
        v = v[np.isfinite(v)]
        if v.size == 0:
            return
        other = Accumulator()
        other.count = float(v.size)
        other.mean = float(v.mean())
        other.m2 = float(((v - other.mean) ** 2).sum())
        self.merge(other)

    def merge(self, other: "Accumulator"):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / total
        self.mean = self.mean + delta * other.count / total
        self.count = total

    @property
    def std(self) -> float:
        return float(np.sqrt(self.m2 / self.count)) if self.count else float("nan")


class ChannelStats:
    """mean/std per channel, bound to a training-set fingerprint."""

    def __init__(self, stats: dict, train_fingerprint: str):
        self.stats = stats  # channel -> (mean, std)
        self.train_fingerprint = train_fingerprint

    def __contains__(self, channel):
        return channel in self.stats

    def mean(self, channel) -> float:
        return self.stats[channel][0]

    def std(self, channel) -> float:
        return self.stats[channel][1]


def train_fingerprint(patch_ids) -> str:
    h = hashlib.sha256()
    for pid in sorted(patch_ids):
        h.update(pid.encode())
        h.update(b"\n")
    return h.hexdigest()


def compute_stats(patches, channels=INPUT_CHANNELS) -> ChannelStats:
    """Fold per-patch partials over the training set.

    ``patches`` is an iterable of (patch_id, {channel: 2-D array}).  Merge
    order follows iteration order, so stream patches sorted by id when
    bit-reproducibility matters; the fingerprint is order-independent.
    Any channel that is all-NaN or constant across the whole set is
    rejected (a degenerate input would divide by zero downstream).
    """
    accs = {c: Accumulator() for c in channels}
    ids = []
    for pid, chans in patches:
        ids.append(pid)
        for c in channels:
            if c not in chans:
                raise ValueError(f"patch {pid} lacks channel {c}")
            accs[c].add_array(chans[c])
    if not ids:
        raise ValueError("empty training set")
    stats = {}
    for c in channels:
        a = accs[c]
        if a.count == 0:
            raise ValueError(f"channel {c} has no finite values")
        if a.std == 0:
            raise ValueError(f"channel {c} is constant (std 0); cannot normalize")
        stats[c] = (a.mean, a.std)
    return ChannelStats(stats, train_fingerprint(ids))


def normalize(channels: dict, stats: ChannelStats) -> dict:
    """(x - mean)/std for every channel covered by stats; others (the label
    included) pass through untouched."""
    out = {}
    for name, arr in channels.items():
        if name in stats:
            out[name] = (np.asarray(arr, dtype=np.float64) - stats.mean(name)) / stats.std(name)
        else:
            out[name] = arr
    return out


def denormalize(channels: dict, stats: ChannelStats) -> dict:
    out = {}
    for name, arr in channels.items():
        if name in stats:
            out[name] = np.asarray(arr, dtype=np.float64) * stats.std(name) + stats.mean(name)
        else:
            out[name] = arr
    return out


def stats_to_json(s: ChannelStats) -> dict:
    return {
        "channels": {
            c: {"mean": m, "std": sd} for c, (m, sd) in sorted(s.stats.items())
        },
        "train_fingerprint": s.train_fingerprint,
    }


def stats_from_json(obj) -> ChannelStats:
    return ChannelStats(
        {c: (d["mean"], d["std"]) for c, d in obj["channels"].items()},
        obj["train_fingerprint"],
    )


def save_stats(s: ChannelStats, path):
    with open(path, "w") as f:
        json.dump(stats_to_json(s), f, sort_keys=True, indent=2)
        f.write("\n")


def load_stats(path) -> ChannelStats:
    with open(path) as f:
        return stats_from_json(json.load(f))
