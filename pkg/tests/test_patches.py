"""Tiling, rain classification and the patch store."""
import json

import numpy as np
import pytest

import oracle_grid
from sarwind.patches import (
    DELTA_THRESHOLD,
    PATCH_SIZE,
    Patch,
    PatchRef,
    classify_patch,
    delta_rainless,
    extract_patches,
    filter_by_delta,
    partition_rain,
    read_catalog,
    read_patch_blob,
    write_patches,
)
from sarwind.scene import Grid2D, Scene


def _mk(cls):
    return np.asarray(cls, dtype=np.float64)


def test_partition_rejects_unknown_class():
    with pytest.raises(ValueError):
        partition_rain(_mk([[0, 5]]))


def test_classify_rainless_requires_zero_light_rain():
    cls = np.zeros((10, 10))
    assert classify_patch(cls)[0] == "rainless"
    cls[0, 0] = 1  # a single drizzle pixel disqualifies
    assert classify_patch(cls)[0] == "discarded"


def test_classify_rain_needs_strictly_over_five_percent():
    cls = np.zeros((10, 10))
    cls[0, :5] = 2
    category, frac = classify_patch(cls)
    assert frac == 0.05
    assert category == "discarded"  # exactly 5% is not enough
    cls[0, 5] = 3
    category, frac = classify_patch(cls)
    assert category == "rain"
    assert frac == 0.06


def test_classify_fraction_ignores_nan_pixels():
    cls = np.zeros((10, 10))
    cls[0, :6] = 2
    cls[5:, :] = np.nan  # half the tile invalid
    category, frac = classify_patch(cls)
    assert frac == pytest.approx(6 / 50)
    assert category == "rain"


def test_classify_against_loop_oracle(rng):
    cls = rng.integers(0, 4, size=(16, 16)).astype(float)
    cls[rng.random((16, 16)) < 0.1] = np.nan
    above, valid = oracle_grid.count_rain_pixels(cls.tolist())
    _, frac = classify_patch(cls)
    assert frac == pytest.approx(above / valid)


def test_delta_masked_mse_matches_oracle(rng):
    model = rng.uniform(2, 15, (8, 8))
    gmf = model + rng.normal(0, 1, (8, 8))
    cls = np.zeros((8, 8))
    cls[:2] = 2  # rainy rows excluded from the A- average
    part = partition_rain(cls)
    want = oracle_grid.masked_mse(
        model.tolist(), gmf.tolist(), (cls == 0).tolist()
    )
    got = delta_rainless(model, gmf, part)
    assert got == pytest.approx(want, abs=1e-12)


def test_delta_none_when_no_rainless_pixels():
    cls = np.full((4, 4), 2.0)
    part = partition_rain(cls)
    assert delta_rainless(np.ones((4, 4)), np.ones((4, 4)), part) is None


def test_delta_filter_is_strict():
    assert filter_by_delta(0.999)
    assert not filter_by_delta(DELTA_THRESHOLD)
    assert not filter_by_delta(1.5)
    assert not filter_by_delta(None)


def _toy_scene(rows=512, cols=512, wind=8.0, seed=0):
    rng = np.random.default_rng(seed)
    model = np.full((rows, cols), wind)
    channels = {
        "rain_class": Grid2D(np.zeros((rows, cols))),
        "wspd_model": Grid2D(model),
        "wspd_gmf": Grid2D(model + rng.normal(0, 0.1, (rows, cols))),
    }
    from datetime import datetime, timezone

    return Scene(
        id="toy",
        acquisition_time=datetime(2023, 1, 1, tzinfo=timezone.utc),
        origin_lat=45.0,
        origin_lon=-30.0,
        heading=0.0,
        channels=channels,
    )


def test_extract_tiles_non_overlapping():
    scene = _toy_scene(512 + 100, 512)  # ragged rows: edge strip dropped
    got = extract_patches(scene)
    assert len(got) == 2 * 2
    coords = {(p.row0, p.col0) for p in got}
    assert coords == {(0, 0), (0, 256), (256, 0), (256, 256)}
    assert all(p.size == PATCH_SIZE for p in got)


def test_extract_small_scene_warns_and_returns_empty():
    scene = _toy_scene(100, 100)
    with pytest.warns(UserWarning, match="smaller"):
        assert extract_patches(scene) == []


def test_extract_requires_label_channels():
    scene = _toy_scene()
    del scene.channels["wspd_gmf"]
    with pytest.raises(ValueError, match="wspd_gmf"):
        extract_patches(scene)


def test_extract_demotes_delta_failures():
    scene = _toy_scene()
    # blow up the model-vs-gmf agreement on one tile only
    scene.channels["wspd_gmf"].values[:256, :256] += 3.0
    cats = {(p.row0, p.col0): p.category for p in extract_patches(scene)}
    assert cats[(0, 0)] == "discarded"
    assert cats[(256, 256)] == "rainless"


def test_patch_id_and_label_helpers():
    p = Patch(
        scene_id="s1",
        row0=256,
        col0=512,
        channels={"wspd_model": np.full((4, 4), 7.0)},
        rain_fraction_3mm=0.0,
        delta=0.1,
        category="rainless",
        size=4,
    )
    assert p.id == "s1_256_512"
    assert p.rainless
    assert p.mean_label_wind == pytest.approx(7.0)


def test_patch_ref_mirrors_catalog_row():
    row = {
        "scene_id": "s2",
        "row0": 0,
        "col0": 256,
        "class": "rain",
        "rain_fraction": 0.2,
        "delta": 0.5,
        "mean_label_wind": 9.5,
    }
    ref = PatchRef.from_row(row)
    assert ref.id == "s2_0_256"
    assert ref.category == "rain"
    assert ref.mean_label_wind == 9.5


# ---------------------------------------------------------------------------
# store round trip


def _patch_with_data(seed=0):
    rng = np.random.default_rng(seed)
    channels = {
        "wspd_model": rng.uniform(0, 20, (8, 8)),
        "sigma0_vv": rng.uniform(0, 0.5, (8, 8)),
    }
    return Patch(
        scene_id=f"s{seed}",
        row0=0,
        col0=0,
        channels=channels,
        rain_fraction_3mm=0.0,
        delta=0.2,
        category="rainless",
        size=8,
    )


def test_patch_store_roundtrip(tmp_path):
    patches = [_patch_with_data(0), _patch_with_data(1)]
    d = write_patches(patches, tmp_path)
    meta = json.loads((d / "patches_meta.json").read_text())
    assert meta["size"] == 8
    assert meta["channels"] == ["sigma0_vv", "wspd_model"]

    back = read_patch_blob(d / f"{patches[0].id}.f32", meta)
    for name in meta["channels"]:
        want = patches[0].channels[name].astype(np.float32).astype(np.float64)
        assert np.array_equal(back[name], want)

    rows = read_catalog(d)
    assert [r["scene_id"] for r in rows] == ["s0", "s1"]
    assert all(set(r) >= {"scene_id", "row0", "col0", "class", "rain_fraction",
                          "delta", "mean_label_wind"} for r in rows)


def test_discarded_patches_get_no_blob(tmp_path):
    keep = _patch_with_data(0)
    drop = _patch_with_data(1)
    drop.category = "discarded"
    d = write_patches([keep, drop], tmp_path)
    assert (d / f"{keep.id}.f32").exists()
    assert not (d / f"{drop.id}.f32").exists()
    assert len(read_catalog(d)) == 2  # the catalog still records it


def test_write_patches_refuses_empty(tmp_path):
    with pytest.raises(ValueError):
        write_patches([], tmp_path)
