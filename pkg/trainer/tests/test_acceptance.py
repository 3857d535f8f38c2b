"""Release gate for the learned wind corrector.

One test per shipped guarantee, run against a full desk-scale chain:
synthesize a 200-scene workspace, train variant IV for 2000 steps with
the desk preset, predict the held-out test scenes, and score with the
pipeline's evaluation stage.  The fixture takes ten minutes or so; skip
with ``-m "not acceptance"`` during development.
"""

import json
import shutil
import time

import numpy as np
import pytest
import torch

from windunet import formats
from windunet.cli import main as windunet_main
from windunet.predict import predict_array
from windunet.train import load_checkpoint

from conftest import run_pipeline

pytestmark = pytest.mark.acceptance

STEPS = 2000


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    ws = root / "ws"
    t0 = time.perf_counter()
    run_pipeline("run-all", "--workspace", ws, "--seed", "7")
    ck = ws / "models" / "unet_IV.pt"
    assert windunet_main(["train", "--workspace", str(ws), "--variant", "IV",
                          "--preset", "desk", "--steps", str(STEPS),
                          "--seed", "0", "--out", str(ck)]) == 0
    assert windunet_main(["predict", "--workspace", str(ws),
                          "--weights", str(ck)]) == 0
    run_pipeline("evaluate", "--workspace", ws,
                 "--pred-channel", "wspd_cnn", "--bins", "table3")
    elapsed = time.perf_counter() - t0
    yield ws, ck, elapsed
    shutil.rmtree(root, ignore_errors=True)


def _bins(ws, channel):
    path = ws / "reports" / f"eval_{channel}_table3.json"
    return json.loads(path.read_text())["bins"]


def _test_scenes(ws):
    assignment = formats.read_assignment(ws)
    return [d for d in formats.scene_dirs(ws) if d.name in assignment["test"]]


def test_heavy_rain_rmse_drops_by_at_least_a_quarter(trained_run):
    ws, _, _ = trained_run
    gmf = _bins(ws, "wspd_gmf")[">3"]
    cnn = _bins(ws, "wspd_cnn")[">3"]
    assert cnn["n"] > 0
    assert cnn["rmse"] <= 0.75 * gmf["rmse"], (
        f"rain-bin RMSE {cnn['rmse']:.3f} vs GMF {gmf['rmse']:.3f} "
        f"({100 * (1 - cnn['rmse'] / gmf['rmse']):.0f}% reduction, need 25%)")


def test_rainless_accuracy_within_two_tenths_of_gmf(trained_run):
    ws, _, _ = trained_run
    gmf = _bins(ws, "wspd_gmf")["<1"]
    cnn = _bins(ws, "wspd_cnn")["<1"]
    assert cnn["rmse"] <= gmf["rmse"] + 0.2, (
        f"rainless RMSE {cnn['rmse']:.3f} vs GMF {gmf['rmse']:.3f}")


def test_predicted_fields_are_finite_and_nonnegative(trained_run):
    ws, _, _ = trained_run
    scenes = _test_scenes(ws)
    assert scenes
    for scene in scenes:
        wind = formats.read_channel(scene, "wspd_cnn")
        assert np.isfinite(wind).all()
        assert float(wind.min()) >= 0.0


def test_trained_model_is_shift_consistent(trained_run):
    """Predicting two windows offset by one pool stride must agree in the
    interior (outside the reflect-padding halo) to within 0.05 m/s."""
    ws, ck, _ = trained_run
    model, variant, stats = load_checkpoint(ck)
    scene = _test_scenes(ws)[0]
    meta = formats.read_scene_meta(scene)
    stack = np.stack([formats.read_channel(scene, name, meta)
                      for name in variant.channels])
    for j, name in enumerate(variant.channels):
        mean, std = stats[name]
        stack[j] = (stack[j] - mean) / std
    np.nan_to_num(stack, copy=False, nan=0.0, posinf=0.0, neginf=0.0)

    p1 = predict_array(model, stack[:, :256, :256])
    p2 = predict_array(model, stack[:, 16:272, 16:272])
    m = 64
    inner1 = p1[16 + m:256 - m, 16 + m:256 - m]
    inner2 = p2[m:240 - m, m:240 - m]
    mae = float(np.abs(inner1 - inner2).mean())
    assert mae <= 0.05, f"interior MAE {mae:.4f} m/s"


def test_chain_leaves_workspace_verifiable(trained_run):
    ws, _, elapsed = trained_run
    out = run_pipeline("verify", "--workspace", ws)
    assert "verify: OK" in out
    assert elapsed < 1800, f"desk chain took {elapsed:.0f}s"
