"""Scene-level dataset splitting and leakage verification."""
import numpy as np
import pytest

from sarwind.patches import PatchRef
from sarwind.split import (
    FRACTION_GATE,
    SplitAssignment,
    SplitConfig,
    assignment_from_json,
    assignment_to_json,
    exhaustive_split,
    load_assignment,
    save_assignment,
    scene_stats,
    stochastic_split,
    verify_no_leakage,
)


def _corpus(n_scenes=12, per_scene=6, seed=0):
    """Synthetic balanced selection: every scene holds both classes."""
    rng = np.random.default_rng(seed)
    refs = []
    for s in range(n_scenes):
        for k in range(per_scene):
            category = "rain" if k % 2 == 0 else "rainless"
            refs.append(
                PatchRef(f"sc{s:02d}", 256 * k, 0, category,
                         float(rng.uniform(2, 18)))
            )
    return refs


def test_scene_stats_counts_patches():
    refs = _corpus(n_scenes=3, per_scene=4)
    stats = scene_stats(refs)
    assert [s.id for s in stats] == ["sc00", "sc01", "sc02"]
    for s in stats:
        assert s.counts_plus.sum() == 2
        assert s.counts_minus.sum() == 2
        assert s.n_patches == 4


def test_split_needs_three_scenes():
    refs = _corpus(n_scenes=2)
    with pytest.raises(ValueError, match="at least 3"):
        stochastic_split(scene_stats(refs), SplitConfig(iterations=10))


def test_split_needs_both_classes():
    refs = [PatchRef(f"s{i}", 0, 0, "rainless", 5.0) for i in range(5)]
    with pytest.raises(ValueError, match="classes"):
        stochastic_split(scene_stats(refs), SplitConfig(iterations=10))


def test_split_deterministic_per_seed():
    stats = scene_stats(_corpus())
    a = stochastic_split(stats, SplitConfig(iterations=500, seed=42))
    b = stochastic_split(stats, SplitConfig(iterations=500, seed=42))
    assert a.val_scenes == b.val_scenes
    assert a.test_scenes == b.test_scenes
    assert a.e == b.e


def test_split_trace_strictly_improves():
    stats = scene_stats(_corpus(n_scenes=20, seed=3))
    a = stochastic_split(stats, SplitConfig(iterations=2000, seed=1))
    errors = [e for _, e in a.trace]
    assert errors == sorted(errors, reverse=True)
    assert len(set(errors)) == len(errors)  # strict improvements only
    assert a.e == errors[-1]


def test_split_subsets_disjoint():
    stats = scene_stats(_corpus(n_scenes=15, seed=5))
    a = stochastic_split(stats, SplitConfig(iterations=1000, seed=2))
    assert not set(a.val_scenes) & set(a.test_scenes)
    assert a.val_scenes == sorted(a.val_scenes)
    assert len(a.val_scenes) >= 1 and len(a.test_scenes) >= 1


def test_harmonic_mean_objective():
    stats = scene_stats(_corpus(n_scenes=10, seed=7))
    a = stochastic_split(stats, SplitConfig(iterations=300, seed=0))
    if a.e_val + a.e_test > 0:
        want = 2 * a.e_val * a.e_test / (a.e_val + a.e_test)
        assert a.e == pytest.approx(want, rel=1e-12)


def test_exhaustive_finds_no_worse_candidate():
    stats = scene_stats(_corpus(n_scenes=8, per_scene=4, seed=11))
    best = exhaustive_split(stats, SplitConfig())
    sampled = stochastic_split(stats, SplitConfig(iterations=3000, seed=9))
    assert best.e <= sampled.e + 1e-12


def test_exhaustive_beats_or_equals_more_sampling():
    stats = scene_stats(_corpus(n_scenes=7, per_scene=4, seed=13))
    best = exhaustive_split(stats, SplitConfig())
    # the stochastic search must approach the optimum given enough draws
    sampled = stochastic_split(stats, SplitConfig(iterations=20000, seed=4))
    assert sampled.e <= 1.5 * best.e + 1e-9


# ---------------------------------------------------------------------------
# leakage verification


def _rows_for(assignment, refs, subset_override=None):
    rows = []
    for r in refs:
        subset = assignment.subset_of(r.scene_id)
        rows.append({
            "scene_id": r.scene_id,
            "row0": r.row0,
            "col0": r.col0,
            "class": r.category,
            "subset": subset_override.get(r.id, subset) if subset_override else subset,
        })
    return rows


def _two_by_two(n_scenes=20):
    """Hand-built assignment: 2 val + 2 test scenes out of n, i.e. exactly
    10 % of patches held out per subset on a uniform corpus."""
    return SplitAssignment(
        val_scenes=["sc00", "sc01"],
        test_scenes=["sc02", "sc03"],
        e_val=0.0,
        e_test=0.0,
        e=0.0,
    )


def test_verify_accepts_clean_assignment():
    refs = _corpus(n_scenes=20, per_scene=5, seed=2)
    a = _two_by_two()
    report = verify_no_leakage(a, _rows_for(a, refs))
    assert report["passed"], report["problems"]
    lo, hi = FRACTION_GATE
    assert lo <= report["fractions"]["val"] <= hi
    assert lo <= report["fractions"]["test"] <= hi


def test_verify_flags_cross_subset_patch():
    refs = _corpus(n_scenes=20, per_scene=5, seed=2)
    a = _two_by_two()
    bad_ref = next(r for r in refs if a.subset_of(r.scene_id) == "train")
    rows = _rows_for(a, refs, subset_override={bad_ref.id: "val"})
    report = verify_no_leakage(a, rows)
    assert not report["passed"]
    assert any("marked val" in p for p in report["problems"])


def test_verify_ignores_unselected_rows():
    refs = _corpus(n_scenes=20, per_scene=5, seed=2)
    a = _two_by_two()
    rows = _rows_for(a, refs)
    rows.append({"scene_id": "sc00", "row0": 999, "col0": 0,
                 "class": "discarded", "subset": None})
    report = verify_no_leakage(a, rows)
    assert report["passed"], report["problems"]
    assert sum(report["counts"].values()) == len(refs)


def test_assignment_json_roundtrip(tmp_path):
    refs = _corpus()
    a = stochastic_split(scene_stats(refs), SplitConfig(iterations=200, seed=8))
    path = tmp_path / "assignment.json"
    save_assignment(a, path)
    b = load_assignment(path)
    assert b.val_scenes == a.val_scenes
    assert b.test_scenes == a.test_scenes
    assert b.e == a.e
    obj = assignment_to_json(a)
    c = assignment_from_json(obj)
    assert c.seed == a.seed and c.iterations == a.iterations
