"""CMOD5.N geophysical model function: forward, roughness normalization,
and wind-speed inversion with a fixed direction prior.

The coefficient table ships as a versioned ASCII file (one value per line,
index order documented there) so external checks can read the same source.
Relative wind direction phi is measured from the antenna look angle; scenes
use a right-looking geometry, look = heading + 90 degrees.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import NamedTuple

import numpy as np

from . import kernels
from .scene import (
    Grid2D,
    Scene,
    crop_to_multiple,
    downscale_power,
    interpolate_ancillary,
)

WIND_RANGE = (0.0, 60.0)
INCIDENCE_RANGE = (15.0, 50.0)

#: the roughness reference: sigma0 of a 10 m/s wind at 45 deg relative direction
SSR_REFERENCE_WIND = 10.0
SSR_REFERENCE_PHI = 45.0


@lru_cache(maxsize=1)
def load_coefficients() -> np.ndarray:
    """Load the 28 CMOD5.N coefficients from the packaged ASCII table."""
    text = resources.files("sarwind").joinpath("data/cmod5n_coefficients.txt").read_text()
    vals = [float(s) for s in text.splitlines() if s.strip() and not s.startswith("#")]
    if len(vals) != 28:
        raise ValueError(f"coefficient table holds {len(vals)} values, expected 28")
    return np.asarray(vals, dtype=np.float64)


@dataclass
class InversionConfig:
    """Bracketed 1-D inversion settings; objective is the squared residual
    in linear sigma0."""

    v_min: float = 0.2
    v_max: float = 50.0
    tolerance: float = 0.01  # m/s on the bracketed minimum

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


class InversionResult(NamedTuple):
    speed: np.ndarray | float
    saturated: np.ndarray | bool


def _check_range(name, arr, lo, hi, half_open_hi=False):
    finite = arr[np.isfinite(arr)]
    if finite.size == 0:
        return
    bad_hi = finite >= hi if half_open_hi else finite > hi
    if np.any(finite < lo) or np.any(bad_hi):
        span = f"[{lo}, {hi}{')' if half_open_hi else ']'}"
        raise ValueError(f"{name} outside {span}")


def cmod5n_sigma0(wind_speed, phi_rel, incidence):
    """Forward CMOD5.N: linear-power VV sigma0.

    Accepts scalars or broadcastable arrays.  Positive for any positive wind;
    exactly zero at 0 m/s (the model's low-wind branch vanishes there).
    NaN inputs yield NaN.
    """
    v, phi, theta = np.broadcast_arrays(
        np.asarray(wind_speed, dtype=np.float64),
        np.asarray(phi_rel, dtype=np.float64),
        np.asarray(incidence, dtype=np.float64),
    )
    _check_range("wind_speed", v, *WIND_RANGE)
    _check_range("incidence", theta, *INCIDENCE_RANGE)
    _check_range("phi_rel", phi, 0.0, 360.0, half_open_hi=True)
    out = kernels.forward(
        np.ascontiguousarray(v.ravel()),
        np.ascontiguousarray(phi.ravel()),
        np.ascontiguousarray(theta.ravel()),
        load_coefficients(),
    ).reshape(v.shape)
    if out.ndim == 0 or np.isscalar(wind_speed) and out.size == 1:
        return float(out.reshape(()))
    return out


def ssr(sigma0_vv, incidence, phi_rel=None):
    """Sea surface roughness: sigma0 over the 10 m/s / 45 deg reference.

    The reference direction is fixed at 45 degrees whatever the pixel's
    actual relative direction; phi_rel is accepted for call-site uniformity
    but does not enter the denominator.
    """
    s0 = np.asarray(sigma0_vv, dtype=np.float64)
    finite = s0[np.isfinite(s0)]
    if np.any(finite <= 0):
        raise ValueError("sigma0_vv must be positive (linear power)")
    ref = cmod5n_sigma0(SSR_REFERENCE_WIND, SSR_REFERENCE_PHI, incidence)
    out = s0 / ref
    if np.isscalar(sigma0_vv):
        return float(out)
    return out


def invert_wind(sigma0_vv, incidence, phi_rel, cfg: InversionConfig | None = None):
    """Invert sigma0 to wind speed by bracketed minimisation.

    A coarse scan locates the lowest-wind root of the residual (the model
    folds back at high winds, so there can be two) and golden section
    refines it to cfg.tolerance.  Returns InversionResult(speed, saturated);
    saturated marks observations brighter than the forward model anywhere in
    [v_min, v_max], reported as v_max.
    """
    cfg = cfg or InversionConfig()
    s0, theta, phi = np.broadcast_arrays(
        np.asarray(sigma0_vv, dtype=np.float64),
        np.asarray(incidence, dtype=np.float64),
        np.asarray(phi_rel, dtype=np.float64),
    )
    finite = s0[np.isfinite(s0)]
    if np.any(finite <= 0):
        raise ValueError("sigma0_vv must be positive (linear power)")
    wind, sat = kernels.invert(
        np.ascontiguousarray(s0.ravel()),
        np.ascontiguousarray(phi.ravel()),
        np.ascontiguousarray(theta.ravel()),
        load_coefficients(),
        cfg.v_min,
        cfg.v_max,
        cfg.tolerance,
    )
    wind = wind.reshape(s0.shape)
    sat = sat.reshape(s0.shape).astype(bool)
    if np.isscalar(sigma0_vv):
        return InversionResult(float(wind.reshape(())), bool(sat.reshape(())))
    return InversionResult(wind, sat)


def relative_direction(wdir_deg, heading_deg):
    """Wind direction relative to the (right-looking) antenna look angle."""
    return np.mod(np.asarray(wdir_deg, dtype=np.float64) - (heading_deg + 90.0), 360.0)


def invert_scene(
    scene: Scene,
    cfg: InversionConfig | None = None,
    block_factor: int = 10,
) -> Grid2D:
    """Scene-level wind retrieval on a coarse grid, interpolated back.

    Sigma0 is block-averaged in linear power to the 1 km/px grid
    (block_factor x block_factor working pixels), inverted per coarse pixel
    with the scene's direction prior, then bilinearly interpolated back to
    the working grid.  Grids are cropped from the top left when the scene
    dims do not divide by the block factor; the interpolation maps the
    cropped coarse grid back over the full scene extent.
    """
    cfg = cfg or InversionConfig()
    missing = [
        name
        for name in ("sigma0_vv", "incidence", "wdir_prior")
        if name not in scene.channels
    ]
    if missing:
        raise ValueError(f"scene {scene.id} lacks channels {missing} for inversion")

    s0 = crop_to_multiple(scene.channels["sigma0_vv"], block_factor)
    theta = crop_to_multiple(scene.channels["incidence"], block_factor)
    wdir = crop_to_multiple(scene.channels["wdir_prior"], block_factor)

    s0_c = downscale_power(s0, block_factor).values
    theta_c = downscale_power(theta, block_factor).values
    rad = np.deg2rad(wdir.values)
    cos_c = downscale_power(Grid2D(np.cos(rad)), block_factor).values
    sin_c = downscale_power(Grid2D(np.sin(rad)), block_factor).values
    wdir_c = np.mod(np.rad2deg(np.arctan2(sin_c, cos_c)), 360.0)
    phi_c = relative_direction(wdir_c, scene.heading)

    wind_c = np.full(s0_c.shape, np.nan)
    ok = np.isfinite(s0_c) & np.isfinite(theta_c) & np.isfinite(phi_c) & (s0_c > 0)
    if np.any(ok):
        res = invert_wind(s0_c[ok], theta_c[ok], phi_c[ok], cfg)
        wind_c[ok] = res.speed

    coarse = Grid2D(wind_c, pixel_spacing=s0.pixel_spacing * block_factor)
    return interpolate_ancillary(coarse, scene.rows, scene.cols)
