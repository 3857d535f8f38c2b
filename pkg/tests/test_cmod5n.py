"""Forward model and inversion behaviour, checked against the scalar oracle."""
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle_cmod5n as oracle
from sarwind import kernels
from sarwind.cmod5n import (
    InversionConfig,
    cmod5n_sigma0,
    invert_scene,
    invert_wind,
    load_coefficients,
    relative_direction,
    ssr,
)


def test_coefficients_match_oracle_table():
    assert np.allclose(load_coefficients(), oracle.load_table(), rtol=0, atol=0)


def test_forward_matches_scalar_oracle_on_lattice():
    winds = np.arange(1.0, 26.0, 1.0)
    phis = np.arange(0.0, 360.0, 45.0)
    thetas = np.array([20.0, 30.0, 40.0])
    worst = 0.0
    for th in thetas:
        for ph in phis:
            got = cmod5n_sigma0(winds, np.full_like(winds, ph), np.full_like(winds, th))
            want = np.array([oracle.sigma0(v, ph, th) for v in winds])
            worst = max(worst, np.max(np.abs(got - want)))
    assert worst < 1e-10


def test_zero_wind_gives_zero_sigma0():
    # B0 ~ v^(gamma * positive power) at the origin, so the kernel pins it
    assert cmod5n_sigma0(0.0, 90.0, 30.0) == 0.0


def test_sigma0_increases_with_wind_midrange():
    v = np.linspace(2.0, 18.0, 50)
    s = cmod5n_sigma0(v, np.full(50, 45.0), np.full(50, 35.0))
    assert np.all(np.diff(s) > 0)


def test_sigma0_folds_back_at_high_wind():
    """The GMF is non-monotone near the top of the bracket (upwind look)."""
    v = np.linspace(20.0, 50.0, 200)
    s = cmod5n_sigma0(v, np.zeros(200), np.full(200, 40.0))
    assert np.any(np.diff(s) < 0)


def test_forward_domain_checks():
    with pytest.raises(ValueError):
        cmod5n_sigma0(-1.0, 0.0, 30.0)
    with pytest.raises(ValueError):
        cmod5n_sigma0(5.0, 0.0, 51.0)
    with pytest.raises(ValueError):
        cmod5n_sigma0(5.0, 360.0, 30.0)  # phi is half-open [0, 360)
    with pytest.raises(ValueError):
        cmod5n_sigma0(61.0, 0.0, 30.0)


def test_forward_accepts_nan_without_raising():
    out = cmod5n_sigma0(np.array([5.0, np.nan]), np.zeros(2), np.full(2, 30.0))
    assert np.isfinite(out[0]) and np.isnan(out[1])


@given(
    v=st.floats(1.0, 24.0),
    phi=st.floats(0.0, 359.9),
    theta=st.floats(16.0, 49.0),
)
@settings(max_examples=60, deadline=None)
def test_forward_positive_and_finite(v, phi, theta):
    s = cmod5n_sigma0(v, phi, theta)
    assert np.isfinite(s)
    assert s > 0


def test_ssr_definition():
    theta = np.array([20.0, 30.0, 40.0])
    s0 = cmod5n_sigma0(np.full(3, 7.0), np.full(3, 120.0), theta)
    ref = cmod5n_sigma0(np.full(3, 10.0), np.full(3, 45.0), theta)
    assert np.allclose(ssr(s0, theta), s0 / ref, rtol=0, atol=1e-14)


def test_ssr_of_reference_conditions_is_one():
    theta = np.linspace(20.0, 45.0, 26)
    s0 = cmod5n_sigma0(np.full_like(theta, 10.0), np.full_like(theta, 45.0), theta)
    assert np.allclose(ssr(s0, theta), 1.0, rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# inversion


def test_roundtrip_recovers_wind():
    rng = np.random.default_rng(7)
    v = rng.uniform(1.0, 24.0, 300)
    phi = rng.uniform(0.0, 360.0, 300)
    theta = rng.uniform(20.0, 46.0, 300)
    s0 = cmod5n_sigma0(v, phi, theta)
    res = invert_wind(s0, theta, phi)
    assert not np.any(res.saturated)
    assert np.max(np.abs(res.speed - v)) < 0.02


def test_inversion_tolerance_is_honoured():
    v = np.array([4.0, 9.0, 15.0])
    phi = np.array([10.0, 200.0, 330.0])
    theta = np.array([25.0, 35.0, 42.0])
    s0 = cmod5n_sigma0(v, phi, theta)
    cfg = InversionConfig(tolerance=0.001)
    res = invert_wind(s0, theta, phi, cfg)
    assert np.max(np.abs(res.speed - v)) < 0.002


def test_saturation_flag_and_clip():
    theta = np.full(8, 35.0)
    phi = np.linspace(0.0, 315.0, 8)
    top = np.array([
        cmod5n_sigma0(np.linspace(0.2, 50.0, 400), np.full(400, p), np.full(400, t)).max()
        for p, t in zip(phi, theta)
    ])
    res = invert_wind(top * 1.5, theta, phi)
    assert np.all(res.saturated == 1)
    assert np.allclose(res.speed, 50.0)


def test_unsaturated_below_maximum():
    v = np.array([23.9])
    s0 = cmod5n_sigma0(v, np.array([45.0]), np.array([35.0]))
    res = invert_wind(s0, np.array([35.0]), np.array([45.0]))
    assert res.saturated[0] == 0


def test_nan_observation_propagates():
    res = invert_wind(np.array([np.nan, 0.05]), np.full(2, 35.0), np.full(2, 45.0))
    assert np.isnan(res.speed[0])
    assert np.isfinite(res.speed[1])


def test_inversion_matches_grid_scan_oracle():
    v_true = np.array([3.0, 8.0, 14.0, 21.0])
    phi = np.array([15.0, 100.0, 250.0, 340.0])
    theta = np.array([22.0, 30.0, 38.0, 44.0])
    s0 = cmod5n_sigma0(v_true, phi, theta)
    res = invert_wind(s0, theta, phi)
    for i in range(4):
        w_ref = oracle.invert_grid_scan(float(s0[i]), float(phi[i]), float(theta[i]))
        assert abs(res.speed[i] - w_ref) < 0.02


def test_backends_agree():
    if kernels.BACKEND != "compiled":
        pytest.skip("compiled backend unavailable; nothing to compare")
    from sarwind import _kernels_py as pure

    rng = np.random.default_rng(3)
    n = 500
    v = rng.uniform(0.5, 30.0, n)
    phi = rng.uniform(0.0, 360.0, n)
    theta = rng.uniform(16.0, 49.0, n)
    c = load_coefficients()

    f_c = kernels.forward(v, phi, theta, c)
    f_p = pure.forward(v, phi, theta, c)
    # libm vs vectorised transcendentals differ by a couple of ULPs
    assert np.allclose(f_c, f_p, rtol=1e-13, atol=0)

    s0 = f_c * rng.uniform(0.5, 1.6, n)
    w_c, sat_c = kernels.invert(s0, phi, theta, c, 0.2, 50.0, 0.01)
    w_p, sat_p = pure.invert(s0, phi, theta, c, 0.2, 50.0, 0.01)
    assert np.array_equal(sat_c, sat_p)
    assert np.max(np.abs(w_c - w_p)[np.isfinite(w_c)]) <= 0.01


def test_pure_python_env_override():
    code = (
        "import sarwind, sys; "
        "sys.exit(0 if sarwind.BACKEND == 'python' else 1)"
    )
    env = dict(os.environ, SARWIND_PURE_PYTHON="1")
    proc = subprocess.run([sys.executable, "-c", code], env=env)
    assert proc.returncode == 0


def test_lattice_inversion_is_fast():
    winds = np.arange(1.0, 26.0)
    phis = np.arange(0.0, 360.0, 45.0)
    thetas = np.array([20.0, 30.0, 40.0])
    V, P, T = np.meshgrid(winds, phis, thetas, indexing="ij")
    s0 = cmod5n_sigma0(V.ravel(), P.ravel(), T.ravel())
    t0 = time.perf_counter()
    res = invert_wind(s0, T.ravel(), P.ravel())
    dt = time.perf_counter() - t0
    assert dt < 5.0
    assert np.max(np.abs(res.speed - V.ravel())) <= 0.02


# ---------------------------------------------------------------------------
# direction convention and scene-level retrieval


def test_relative_direction_right_looking():
    # antenna looks 90 deg right of heading; wind blowing along the look
    # direction is phi = 0
    assert relative_direction(90.0, 0.0) == 0.0
    assert relative_direction(0.0, 0.0) == 270.0
    assert relative_direction(100.0, 10.0) == 0.0


@given(wdir=st.floats(0.0, 359.99), heading=st.floats(0.0, 359.99))
@settings(max_examples=50, deadline=None)
def test_relative_direction_range(wdir, heading):
    phi = relative_direction(wdir, heading)
    assert 0.0 <= phi < 360.0


def test_invert_scene_recovers_smooth_field(small_scene):
    truth = small_scene.channels["wspd_model"].values
    got = small_scene.channels["wspd_gmf"].values
    cls = small_scene.channels["rain_class"].values
    m = (cls == 0) & np.isfinite(got)
    # rain-free pixels: block-averaged speckle leaves a small residual
    err = np.sqrt(np.mean((got[m] - truth[m]) ** 2))
    assert err < 1.0


def test_invert_scene_requires_channels(small_scene):
    from sarwind.scene import Scene

    bare = Scene(
        id="x",
        acquisition_time=small_scene.acquisition_time,
        origin_lat=0.0,
        origin_lon=0.0,
        heading=0.0,
        channels={"sigma0_vv": small_scene.channels["sigma0_vv"]},
    )
    with pytest.raises(ValueError, match="lacks channels"):
        invert_scene(bare)
