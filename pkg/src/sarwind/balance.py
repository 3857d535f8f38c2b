"""Wind-speed histograms and rain/rainless dataset balancing.

Scheme I keeps every rain patch and subsamples the rainless pool so that the
pooled distribution matches the corpus wind distribution; the rainless
target is clamp(2P - P_plus, 0) renormalised, with clamped bins recorded.
Scheme II instead forces both class-conditional histograms to equal P, which
costs rain patches.  The printed-form policy (half the difference) is kept
behind a switch for comparison only.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

#: default bin edges: 1 m/s bins over [0, 30) plus an overflow bin [30, inf)
DEFAULT_EDGES = np.arange(0.0, 31.0)


@dataclass
class WindHistogram:
    """Normalized wind-speed distribution over fixed bins.

    ``edges`` are the left edges plus the final interior right edge; the
    last bin is the overflow [edges[-1], inf), so there are len(edges) bins.
    """

    edges: np.ndarray
    probs: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if self.probs.shape != (len(self.edges),):
            raise ValueError("probs must have one entry per bin (incl. overflow)")
        if np.any(self.probs < 0):
            raise ValueError("probs must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probs sum to {self.probs.sum()}, not 1")

    @property
    def n_bins(self) -> int:
        return len(self.edges)


def bin_index(values, edges=DEFAULT_EDGES) -> np.ndarray:
    """Bin assignment: [e0,e1), ..., [e_{n-1}, inf)."""
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < edges[0]):
        raise ValueError(f"wind values below the first edge {edges[0]}")
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.minimum(idx, len(edges) - 1)


def histogram(wind_values, edges=DEFAULT_EDGES) -> WindHistogram:
    """Histogram of per-patch mean winds, normalized to probabilities."""
    wind_values = np.asarray(wind_values, dtype=np.float64)
    if wind_values.size == 0:
        raise ValueError("cannot histogram an empty value list")
    counts = np.bincount(bin_index(wind_values, edges), minlength=len(edges))
    return WindHistogram(edges=edges, probs=counts / counts.sum(), counts=counts)


def target_rainless(P: WindHistogram, P_plus: WindHistogram):
    """Rainless target distribution: clamp(2P - P_plus, 0), renormalised.

    Returns (histogram, relaxed_bins) where relaxed_bins lists the bins whose
    raw target went negative (the exact-match condition was relaxed there).
    """
    if not np.array_equal(P.edges, P_plus.edges):
        raise ValueError("histograms must share bin edges")
    raw = 2.0 * P.probs - P_plus.probs
    relaxed = np.flatnonzero(raw < 0)
    clamped = np.clip(raw, 0.0, None)
    total = clamped.sum()
    if total <= 0:
        raise ValueError("degenerate corpus: rainless target is all-zero")
    return (
        WindHistogram(edges=P.edges, probs=clamped / total),
        [int(i) for i in relaxed],
    )


def target_rainless_as_printed(P: WindHistogram, P_plus: WindHistogram):
    """The half-difference form, kept only for comparison (experimental).

    Algebraically inconsistent with the pooled-match condition under equal
    class counts; clamped and renormalised the same way so it can be swapped
    in behind the policy switch.
    """
    if not np.array_equal(P.edges, P_plus.edges):
        raise ValueError("histograms must share bin edges")
    raw = 0.5 * (P_plus.probs - P.probs)
    relaxed = np.flatnonzero(raw < 0)
    clamped = np.clip(raw, 0.0, None)
    total = clamped.sum()
    if total <= 0:
        raise ValueError("degenerate corpus: rainless target is all-zero")
    return (
        WindHistogram(edges=P.edges, probs=clamped / total),
        [int(i) for i in relaxed],
    )


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer quotas proportional to weights summing exactly to total.

    Floor first, then hand out the remainder by descending fractional part;
    ties break toward the lower bin index (deterministic).
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0:
        raise ValueError("weights must have positive sum")
    shares = weights / weights.sum() * total
    quotas = np.floor(shares).astype(int)
    short = total - quotas.sum()
    frac = shares - quotas
    order = np.lexsort((np.arange(len(weights)), -frac))
    quotas[order[:short]] += 1
    return quotas


@dataclass
class BalancePlan:
    """Which patches the balanced dataset keeps, and the quota bookkeeping."""

    scheme: str
    seed: int
    edges: np.ndarray
    n_plus: int
    n_minus: int
    quotas_rainless: np.ndarray
    quotas_rain: np.ndarray
    relaxed_bins: list = field(default_factory=list)
    selected_rain: list = field(default_factory=list)  # patch ids
    selected_rainless: list = field(default_factory=list)
    shortfall: dict = field(default_factory=dict)  # bin index -> missing count


def _pool_by_bin(pool, edges):
    """Group pool items into bins by mean label wind; items sorted by id
    first so the draw is invariant to input order."""
    items = sorted(pool, key=lambda p: p.id)
    ids = [p.id for p in items]
    winds = np.array([p.mean_label_wind for p in items])
    idx = bin_index(winds, edges)
    by_bin = {}
    for pid, b in zip(ids, idx):
        by_bin.setdefault(int(b), []).append(pid)
    return by_bin, winds


def sample_rainless(pool, P_minus: WindHistogram, n_minus: int, seed: int):
    """Draw the rainless selection: per-bin quotas from P_minus by largest-
    remainder rounding, uniform without replacement inside each bin.

    Bins are visited in ascending index order with a single seeded
    generator, so a given (pool, target, seed) always returns the same ids.
    A short bin contributes everything it has; the shortfall is logged and
    reported in the second return value.
    """
    if len(pool) < n_minus:
        by_bin, _ = _pool_by_bin(pool, P_minus.edges)
        quotas = largest_remainder(P_minus.probs, n_minus)
        detail = {
            b: int(quotas[b]) - len(by_bin.get(b, []))
            for b in range(len(quotas))
            if quotas[b] > len(by_bin.get(b, []))
        }
        raise ValueError(
            f"rainless pool ({len(pool)}) smaller than n_minus ({n_minus}); "
            f"per-bin shortfall: {detail}"
        )
    by_bin, _ = _pool_by_bin(pool, P_minus.edges)
    quotas = largest_remainder(P_minus.probs, n_minus)
    rng = np.random.default_rng(seed)
    selected = []
    shortfall = {}
    for b in range(len(quotas)):
        want = int(quotas[b])
        have = by_bin.get(b, [])
        if want <= 0:
            continue
        if len(have) < want:
            shortfall[b] = want - len(have)
            warnings.warn(
                f"bin {b} has {len(have)} rainless patches for a quota of "
                f"{want}; taking all"
            )
            selected.extend(have)
        else:
            pick = rng.choice(len(have), size=want, replace=False)
            selected.extend(have[i] for i in sorted(pick))
    return selected, shortfall


def balance_error(P: WindHistogram, P_plus: WindHistogram, P_minus: WindHistogram):
    """Mean squared gap between P and the pooled half-sum, times 100."""
    mix = 0.5 * (P_plus.probs + P_minus.probs)
    return float(np.mean((P.probs - mix) ** 2) * 100.0)


def scheme1_plan(pool_rain, pool_rainless, edges=DEFAULT_EDGES, seed: int = 0,
                 policy: str = "scheme1") -> BalancePlan:
    """Balance by subsampling rainless patches only (every rain patch kept).

    policy "eq5-as-printed" swaps in the half-difference target for
    comparison runs; everything else about the plan is unchanged.
    """
    if not pool_rain:
        raise ValueError("no rain patches; nothing to balance against")
    winds_all = np.array([p.mean_label_wind for p in pool_rain]
                         + [p.mean_label_wind for p in pool_rainless])
    P = histogram(winds_all, edges)
    P_plus = histogram([p.mean_label_wind for p in pool_rain], edges)
    if policy == "eq5-as-printed":
        P_minus_t, relaxed = target_rainless_as_printed(P, P_plus)
    else:
        P_minus_t, relaxed = target_rainless(P, P_plus)
    n = len(pool_rain)
    selected, shortfall = sample_rainless(pool_rainless, P_minus_t, n, seed)
    return BalancePlan(
        scheme=policy,
        seed=seed,
        edges=edges,
        n_plus=n,
        n_minus=len(selected),
        quotas_rainless=largest_remainder(P_minus_t.probs, n),
        quotas_rain=np.asarray(P_plus.counts),
        relaxed_bins=relaxed,
        selected_rain=sorted(p.id for p in pool_rain),
        selected_rainless=selected,
        shortfall=shortfall,
    )


def _capped_largest_remainder(weights, total: int, cap):
    """Largest-remainder rounding under per-bin capacities.

    Floors are clamped to cap; leftover units go by descending fractional
    part to bins with spare capacity (ties toward the lower bin).  Returns
    None when the capacities cannot absorb ``total`` at all.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0 or total > int(np.sum(cap)):
        return None
    shares = weights / weights.sum() * total
    quotas = np.minimum(np.floor(shares).astype(int), cap)
    frac = shares - quotas
    order = np.lexsort((np.arange(len(weights)), -frac))
    short = total - quotas.sum()
    for b in order:
        if short == 0:
            break
        room = int(cap[b] - quotas[b])
        if room > 0:
            add = min(room, short)
            quotas[b] += add
            short -= add
    return quotas if short == 0 else None


def scheme2_plan(pool_rain, pool_rainless, edges=DEFAULT_EDGES, seed: int = 0
                 ) -> BalancePlan:
    """Force BOTH class-conditional histograms toward the corpus P.

    The per-class size N is pushed as high as the per-bin min(rain,
    rainless) capacities allow; quotas are largest-remainder rounded under
    those capacities and the rain pool IS subsampled (this is the policy's
    cost).  Bins whose quota had to deviate from the uncapped rounding are
    reported as relaxed.
    """
    if not pool_rain or not pool_rainless:
        raise ValueError("scheme II needs both pools non-empty")
    rain_by_bin, rain_winds = _pool_by_bin(pool_rain, edges)
    less_by_bin, less_winds = _pool_by_bin(pool_rainless, edges)
    P = histogram(np.concatenate([rain_winds, less_winds]), edges)

    cap = np.array([
        min(len(rain_by_bin.get(b, [])), len(less_by_bin.get(b, [])))
        for b in range(len(edges))
    ])
    servable = (P.probs > 0) & (cap > 0)
    if not np.any(servable):
        raise ValueError("degenerate pools: no bin has patches of both classes")
    # scale until the first servable bin saturates (bins with no joint
    # capacity are excluded up front; they surface as relaxed bins), but
    # never ask for more than the joint capacity holds
    n = min(
        int(np.min(np.floor(cap[servable] / P.probs[servable]))),
        int(cap.sum()),
    )
    quotas = _capped_largest_remainder(P.probs, n, cap)
    while n > 0 and quotas is None:
        n -= 1
        quotas = _capped_largest_remainder(P.probs, n, cap)
    if n == 0 or quotas is None:
        raise ValueError("degenerate pools: joint quota collapsed to zero")
    relaxed = [int(b) for b in np.flatnonzero(quotas != largest_remainder(P.probs, n))]

    rng = np.random.default_rng(seed)
    picks = {"rain": [], "rainless": []}
    for label, by_bin in (("rain", rain_by_bin), ("rainless", less_by_bin)):
        for b in range(len(quotas)):
            want = int(quotas[b])
            if want <= 0:
                continue
            have = by_bin.get(b, [])
            pick = rng.choice(len(have), size=want, replace=False)
            picks[label].extend(have[i] for i in sorted(pick))
    return BalancePlan(
        scheme="scheme2",
        seed=seed,
        edges=edges,
        n_plus=n,
        n_minus=n,
        quotas_rainless=quotas,
        quotas_rain=quotas.copy(),
        relaxed_bins=relaxed,
        selected_rain=picks["rain"],
        selected_rainless=picks["rainless"],
    )


def plan_to_json(plan: BalancePlan) -> dict:
    return {
        "scheme": plan.scheme,
        "seed": plan.seed,
        "edges": [float(e) for e in plan.edges],
        "n_plus": plan.n_plus,
        "n_minus": plan.n_minus,
        "quotas": [int(q) for q in plan.quotas_rainless],
        "quotas_rain": [int(q) for q in plan.quotas_rain],
        "relaxed_bins": list(plan.relaxed_bins),
        "selected_rain": list(plan.selected_rain),
        "selected_rainless": list(plan.selected_rainless),
        "shortfall": {str(k): int(v) for k, v in plan.shortfall.items()},
    }


def histogram_to_json(h: WindHistogram) -> dict:
    out = {"edges": [float(e) for e in h.edges], "probs": [float(p) for p in h.probs]}
    if h.counts is not None:
        out["counts"] = [int(c) for c in h.counts]
    return out


def export_histogram_csv(hists: dict, path):
    """Write one or more histograms (name -> WindHistogram) side by side."""
    names = sorted(hists)
    first = hists[names[0]]
    lines = ["bin_left," + ",".join(names)]
    for b in range(first.n_bins):
        row = [f"{first.edges[b]:g}"] + [f"{hists[n].probs[b]:.9g}" for n in names]
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
