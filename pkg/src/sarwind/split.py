"""Scene-level train/val/test assignment by stochastic search.

Whole scenes move between subsets so no two patches of one scene can land on
different sides of the split (leakage).  Each iteration draws a candidate
scene subset, halves it into val/test, scores both halves against the
10%-of-everything target distribution, and the best harmonic-mean score over
all iterations wins.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .balance import DEFAULT_EDGES, bin_index

TARGET_FRAC = 0.10
FRACTION_GATE = (0.08, 0.12)


@dataclass
class SplitConfig:
    iterations: int = 1_000_000
    seed: int = 0
    target_frac: float = TARGET_FRAC

    def __post_init__(self):
        if not 0 < self.target_frac < 0.5:
            raise ValueError("target_frac must be in (0, 0.5)")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")


@dataclass
class SceneStat:
    """Per-scene class-conditional wind histograms (integer counts)."""

    id: str
    counts_plus: np.ndarray
    counts_minus: np.ndarray

    @property
    def n_patches(self) -> int:
        return int(self.counts_plus.sum() + self.counts_minus.sum())


def scene_stats(refs, edges=DEFAULT_EDGES):
    """Build SceneStats from patch refs (anything with scene_id, category,
    mean_label_wind); refs should already be the balanced selection."""
    by_scene = {}
    for p in refs:
        st = by_scene.get(p.scene_id)
        if st is None:
            st = SceneStat(
                id=p.scene_id,
                counts_plus=np.zeros(len(edges), dtype=np.int64),
                counts_minus=np.zeros(len(edges), dtype=np.int64),
            )
            by_scene[p.scene_id] = st
        b = int(bin_index([p.mean_label_wind], edges)[0])
        if p.category == "rain":
            st.counts_plus[b] += 1
        else:
            st.counts_minus[b] += 1
    return [by_scene[k] for k in sorted(by_scene)]


@dataclass
class SplitAssignment:
    val_scenes: list
    test_scenes: list
    e_val: float
    e_test: float
    e: float
    seed: int = 0
    iterations: int = 0
    trace: list = field(default_factory=list)  # (iteration, e) improvements

    def subset_of(self, scene_id: str) -> str:
        if scene_id in self.val_scenes:
            return "val"
        if scene_id in self.test_scenes:
            return "test"
        return "train"


def _mae(a, b):
    return float(np.mean(np.abs(a - b)))


def _candidate_error(sel_plus, sel_minus, target_plus, target_minus,
                     total_plus, total_minus):
    # P-bar: subset counts over the CORPUS class totals, so the target is
    # target_frac times the normalized corpus distribution
    e = _mae(target_plus, sel_plus / total_plus)
    e += _mae(target_minus, sel_minus / total_minus)
    return e


def stochastic_split(stats, cfg: SplitConfig) -> SplitAssignment:
    """Randomized search for a low-error val/test scene assignment.

    Per iteration: n ~ uniform integers in [max(2, S//10), S//3] scenes, a
    size-n candidate drawn without replacement, first floor(n/2) scenes to
    val and the rest to test; the score is the harmonic mean of the two
    subset errors and the first strict improvement is kept.  Reproducible:
    one PCG64 generator seeded with cfg.seed drives the whole search.
    """
    S = len(stats)
    if S < 3:
        raise ValueError(f"need at least 3 scenes to split, got {S}")
    n1 = max(2, S // 10)
    n2 = max(n1, S // 3)

    C_plus = np.stack([s.counts_plus for s in stats]).astype(np.float64)
    C_minus = np.stack([s.counts_minus for s in stats]).astype(np.float64)
    total_plus = C_plus.sum()
    total_minus = C_minus.sum()
    if total_plus <= 0 or total_minus <= 0:
        raise ValueError("both patch classes must be present to split")
    target_plus = cfg.target_frac * (C_plus.sum(axis=0) / total_plus)
    target_minus = cfg.target_frac * (C_minus.sum(axis=0) / total_minus)

    rng = np.random.default_rng(cfg.seed)
    best = None
    trace = []
    for it in range(cfg.iterations):
        n = int(rng.integers(n1, n2 + 1))
        pick = rng.choice(S, size=n, replace=False)
        val = pick[: n // 2]
        test = pick[n // 2 :]
        e_val = _candidate_error(
            C_plus[val].sum(axis=0), C_minus[val].sum(axis=0),
            target_plus, target_minus, total_plus, total_minus,
        )
        e_test = _candidate_error(
            C_plus[test].sum(axis=0), C_minus[test].sum(axis=0),
            target_plus, target_minus, total_plus, total_minus,
        )
        denom = e_val + e_test
        e = 0.0 if denom == 0 else 2.0 * e_val * e_test / denom
        if best is None or e < best[0]:
            best = (e, e_val, e_test, val.copy(), test.copy())
            trace.append((it, e))
    e, e_val, e_test, val, test = best
    return SplitAssignment(
        val_scenes=sorted(stats[i].id for i in val),
        test_scenes=sorted(stats[i].id for i in test),
        e_val=e_val,
        e_test=e_test,
        e=e,
        seed=cfg.seed,
        iterations=cfg.iterations,
        trace=trace,
    )


def exhaustive_split(stats, cfg: SplitConfig) -> SplitAssignment:
    """Enumerate every feasible (val, test) pair; only viable for toy
    corpora (the acceptance reference on 12 scenes)."""
    from itertools import combinations

    S = len(stats)
    n1 = max(2, S // 10)
    n2 = max(n1, S // 3)
    C_plus = np.stack([s.counts_plus for s in stats]).astype(np.float64)
    C_minus = np.stack([s.counts_minus for s in stats]).astype(np.float64)
    total_plus = C_plus.sum()
    total_minus = C_minus.sum()
    target_plus = cfg.target_frac * (C_plus.sum(axis=0) / total_plus)
    target_minus = cfg.target_frac * (C_minus.sum(axis=0) / total_minus)

    best = None
    for n in range(n1, n2 + 1):
        nv = n // 2
        for cand in combinations(range(S), n):
            for val in combinations(cand, nv):
                val = set(val)
                test = [i for i in cand if i not in val]
                e_val = _candidate_error(
                    C_plus[sorted(val)].sum(axis=0),
                    C_minus[sorted(val)].sum(axis=0),
                    target_plus, target_minus, total_plus, total_minus,
                )
                e_test = _candidate_error(
                    C_plus[test].sum(axis=0), C_minus[test].sum(axis=0),
                    target_plus, target_minus, total_plus, total_minus,
                )
                denom = e_val + e_test
                e = 0.0 if denom == 0 else 2.0 * e_val * e_test / denom
                if best is None or e < best[0]:
                    best = (e, e_val, e_test, sorted(val), list(test))
    e, e_val, e_test, val, test = best
    return SplitAssignment(
        val_scenes=sorted(stats[i].id for i in val),
        test_scenes=sorted(stats[i].id for i in test),
        e_val=e_val,
        e_test=e_test,
        e=e,
    )


def verify_no_leakage(assignment: SplitAssignment, rows):
    """Check subset purity and held-out patch fractions on catalog rows.

    Rows must carry scene_id and subset (null subset rows — patches outside
    the balanced selection — are ignored).  Report-only: returns a dict with
    a pass flag, never raises.
    """
    problems = []
    counts = {"train": 0, "val": 0, "test": 0}
    for row in rows:
        subset = row.get("subset")
        if subset is None:
            continue
        expected = assignment.subset_of(row["scene_id"])
        if subset != expected:
            problems.append(
                f"patch {row['scene_id']}_{row['row0']}_{row['col0']} marked "
                f"{subset}, but scene {row['scene_id']} is {expected}"
            )
        if subset in counts:
            counts[subset] += 1
        else:
            problems.append(f"unknown subset label {subset!r}")
    total = sum(counts.values())
    fractions = {k: (counts[k] / total if total else 0.0) for k in counts}
    lo, hi = FRACTION_GATE
    for k in ("val", "test"):
        if not lo <= fractions[k] <= hi:
            problems.append(
                f"{k} patch fraction {fractions[k]:.4f} outside [{lo}, {hi}]"
            )
    return {
        "passed": not problems,
        "problems": problems,
        "counts": counts,
        "fractions": fractions,
    }


def assignment_to_json(a: SplitAssignment) -> dict:
    return {
        "seed": a.seed,
        "iterations": a.iterations,
        "val": list(a.val_scenes),
        "test": list(a.test_scenes),
        "e_val": a.e_val,
        "e_test": a.e_test,
        "e": a.e,
    }


def assignment_from_json(obj) -> SplitAssignment:
    return SplitAssignment(
        val_scenes=list(obj["val"]),
        test_scenes=list(obj["test"]),
        e_val=obj["e_val"],
        e_test=obj["e_test"],
        e=obj["e"],
        seed=obj.get("seed", 0),
        iterations=obj.get("iterations", 0),
    )


def save_assignment(a: SplitAssignment, path):
    with open(path, "w") as f:
        json.dump(assignment_to_json(a), f, sort_keys=True, indent=2)
        f.write("\n")


def load_assignment(path) -> SplitAssignment:
    with open(path) as f:
        return assignment_from_json(json.load(f))
