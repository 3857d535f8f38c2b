"""Raster scene model and resampling onto the common 100 m/px working grid.

Conventions used throughout the toolkit:

* radiometric channels (``sigma0_*``) are linear power, never dB;
* invalid pixels are NaN (the fill value);
* directions are degrees in [0, 360), meteorological convention;
* grids are row-major 2-D float arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

WORKING_PIXEL_SPACING = 100.0  # metres per pixel on the working grid

#: rain class encoding: 0 -> <1 mm/h, 1 -> [1,3), 2 -> [3,10), 3 -> >=10 mm/h
RAIN_CLASS_THRESHOLDS = (1.0, 3.0, 10.0)

#: canonical channel set carried by a full scene
SCENE_CHANNELS = (
    "sigma0_vv",
    "sigma0_vh",
    "incidence",
    "wdir_prior",
    "wspd_model",
    "wspd_gmf",
    "rain_class",
)

INCIDENCE_RANGE = (15.0, 50.0)


@dataclass
class Grid2D:
    """A 2-D raster with uniform pixel spacing and NaN fill."""

    values: np.ndarray
    pixel_spacing: float = WORKING_PIXEL_SPACING
    fill_value: float = float("nan")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"Grid2D expects a 2-D array, got {self.values.ndim}-D")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError("Grid2D needs at least one row and one column")
        if not self.pixel_spacing > 0:
            raise ValueError("pixel_spacing must be positive")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass
class Scene:
    """A multi-channel raster scene on a shared grid with geo/time metadata."""

    id: str
    acquisition_time: datetime
    origin_lat: float
    origin_lon: float
    heading: float  # degrees clockwise from north
    channels: dict[str, Grid2D] = field(default_factory=dict)

    def __post_init__(self):
        if self.acquisition_time.tzinfo is None:
            self.acquisition_time = self.acquisition_time.replace(tzinfo=timezone.utc)
        self._check_dims()

    def _check_dims(self):
        shapes = {g.values.shape for g in self.channels.values()}
        if len(shapes) > 1:
            raise ValueError(f"scene {self.id}: channels disagree on shape: {shapes}")

    @property
    def rows(self) -> int:
        return next(iter(self.channels.values())).rows

    @property
    def cols(self) -> int:
        return next(iter(self.channels.values())).cols

    def validate(self):
        """Check the per-channel value invariants; raise ValueError on breach."""
        self._check_dims()
        for name, grid in self.channels.items():
            v = grid.values
            ok = grid.valid_mask()
            if name == "incidence":
                lo, hi = INCIDENCE_RANGE
                if np.any((v[ok] < lo) | (v[ok] > hi)):
                    raise ValueError(f"scene {self.id}: incidence outside [{lo}, {hi}]")
            elif name in ("wspd_model", "wspd_gmf"):
                if np.any(v[ok] < 0):
                    raise ValueError(f"scene {self.id}: negative wind in {name}")
            elif name == "rain_class":
                if not np.all(np.isin(v[ok], (0.0, 1.0, 2.0, 3.0))):
                    raise ValueError(f"scene {self.id}: rain_class outside {{0,1,2,3}}")


def rain_class_from_rate(rate: np.ndarray) -> np.ndarray:
    """Map rain rates in mm/h to the categorical classes via the 1/3/10 thresholds."""
    rate = np.asarray(rate, dtype=np.float64)
    cls = np.zeros_like(rate)
    for k, thr in enumerate(RAIN_CLASS_THRESHOLDS, start=1):
        cls[rate >= thr] = k
    cls[np.isnan(rate)] = np.nan
    return cls


# ---------------------------------------------------------------------------
# resampling


def _source_coords(n_src: int, n_dst: int) -> np.ndarray:
    # normalised index grid: endpoints map to endpoints
    if n_dst == 1:
        return np.zeros(1)
    return np.arange(n_dst) * (n_src - 1) / (n_dst - 1)


def interpolate_ancillary(
    coarse: Grid2D,
    target_rows: int,
    target_cols: int,
    nearest_fallback: bool = False,
) -> Grid2D:
    """Bilinear interpolation of an ancillary grid to the target dimensions.

    Corner values are preserved exactly.  Any output pixel whose bilinear
    stencil touches a NaN is NaN (conservative masking); exactly aligned
    pixels copy their source pixel, which makes the operation the identity
    when target dims equal the source dims.

    A 1xN or Nx1 source cannot be interpolated bilinearly; that raises
    unless ``nearest_fallback`` explicitly allows nearest-neighbour.
    """
    v = coarse.values
    rows_s, cols_s = v.shape
    if target_rows < rows_s or target_cols < cols_s:
        raise ValueError("target dimensions must not be smaller than the source")
    if rows_s < 2 or cols_s < 2:
        if not nearest_fallback:
            raise ValueError(
                "source grid is 1xN or Nx1; bilinear interpolation undefined "
                "(pass nearest_fallback=True for nearest-neighbour)"
            )
        fr = np.rint(_source_coords(rows_s, target_rows)).astype(int)
        fc = np.rint(_source_coords(cols_s, target_cols)).astype(int)
        return Grid2D(v[np.ix_(fr, fc)].copy(), pixel_spacing=coarse.pixel_spacing)

    fr = _source_coords(rows_s, target_rows)
    fc = _source_coords(cols_s, target_cols)
    r0 = np.floor(fr).astype(int)
    c0 = np.floor(fc).astype(int)
    wr = fr - r0
    wc = fc - c0
    # collapse the stencil along exactly aligned axes so corners and identity
    # resampling never consult a zero-weight neighbour
    r1 = np.where(wr > 0, np.minimum(r0 + 1, rows_s - 1), r0)
    c1 = np.where(wc > 0, np.minimum(c0 + 1, cols_s - 1), c0)

    wr = wr[:, None]
    wc = wc[None, :]
    out = (
        v[np.ix_(r0, c0)] * (1 - wr) * (1 - wc)
        + v[np.ix_(r0, c1)] * (1 - wr) * wc
        + v[np.ix_(r1, c0)] * wr * (1 - wc)
        + v[np.ix_(r1, c1)] * wr * wc
    )
    return Grid2D(out, pixel_spacing=coarse.pixel_spacing)


def interpolate_direction(
    coarse_deg: Grid2D,
    target_rows: int,
    target_cols: int,
    nearest_fallback: bool = False,
) -> Grid2D:
    """Interpolate an angular field by its (cos, sin) components.

    Avoids the 359 deg / 1 deg seam that plain bilinear interpolation of the
    angle itself would produce.  Output angles are in [0, 360).
    """
    v = coarse_deg.values
    ok = ~np.isnan(v)
    if np.any((v[ok] < 0) | (v[ok] >= 360)):
        raise ValueError("direction values must lie in [0, 360)")
    rad = np.deg2rad(v)
    cos_i = interpolate_ancillary(
        Grid2D(np.cos(rad), pixel_spacing=coarse_deg.pixel_spacing),
        target_rows, target_cols, nearest_fallback,
    )
    sin_i = interpolate_ancillary(
        Grid2D(np.sin(rad), pixel_spacing=coarse_deg.pixel_spacing),
        target_rows, target_cols, nearest_fallback,
    )
    ang = np.rad2deg(np.arctan2(sin_i.values, cos_i.values))
    ang = np.mod(ang, 360.0)
    ang[ang == 360.0] = 0.0
    return Grid2D(ang, pixel_spacing=coarse_deg.pixel_spacing)


def downscale_power(fine: Grid2D, factor: int) -> Grid2D:
    """Block-mean downscaling of a linear-power grid.

    NaN pixels are excluded from each block mean; a block that is entirely
    NaN stays NaN.  Dimensions must divide by ``factor`` (crop first).
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    v = fine.values
    rows, cols = v.shape
    if rows % factor or cols % factor:
        raise ValueError(
            f"grid {rows}x{cols} not divisible by factor {factor}; crop first"
        )
    r_out, c_out = rows // factor, cols // factor
    total = np.zeros((r_out, c_out))
    count = np.zeros((r_out, c_out))
    # accumulate offsets in row-major order so sums match a two-loop reference
    for dr in range(factor):
        for dc in range(factor):
            block = v[dr::factor, dc::factor]
            valid = ~np.isnan(block)
            total += np.where(valid, block, 0.0)
            count += valid
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(count > 0, total / count, np.nan)
    return Grid2D(out, pixel_spacing=fine.pixel_spacing * factor)


def crop_to_multiple(grid: Grid2D, factor: int) -> Grid2D:
    """Crop from the top-left so both dimensions divide by ``factor``."""
    rows = (grid.rows // factor) * factor
    cols = (grid.cols // factor) * factor
    if rows == 0 or cols == 0:
        raise ValueError(f"grid {grid.rows}x{grid.cols} smaller than factor {factor}")
    return Grid2D(grid.values[:rows, :cols], pixel_spacing=grid.pixel_spacing)


# ---------------------------------------------------------------------------
# scene container format: one directory per scene, meta.json + <name>.f32
# (little-endian float32, row-major, NaN fill)


def _format_time(t: datetime) -> str:
    t = t.astimezone(timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_time(s: str) -> datetime:
    return datetime.strptime(s, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def write_scene(scene: Scene, directory: str | Path) -> Path:
    """Write a scene in the bit-exact container format; returns the directory."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "id": scene.id,
        "time": _format_time(scene.acquisition_time),
        "origin_lat": scene.origin_lat,
        "origin_lon": scene.origin_lon,
        "heading_deg": scene.heading,
        "rows": scene.rows,
        "cols": scene.cols,
        "channels": sorted(scene.channels),
    }
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    for name in sorted(scene.channels):
        arr = np.ascontiguousarray(scene.channels[name].values, dtype="<f4")
        (d / f"{name}.f32").write_bytes(arr.tobytes())
    return d


def read_scene(directory: str | Path) -> Scene:
    d = Path(directory)
    meta_path = d / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no meta.json under {d}")
    meta = json.loads(meta_path.read_text())
    rows, cols = meta["rows"], meta["cols"]
    channels = {}
    for name in meta["channels"]:
        raw = (d / f"{name}.f32").read_bytes()
        arr = np.frombuffer(raw, dtype="<f4")
        if arr.size != rows * cols:
            raise ValueError(
                f"{name}.f32 holds {arr.size} values, expected {rows * cols}"
            )
        channels[name] = Grid2D(arr.reshape(rows, cols).astype(np.float64))
    return Scene(
        id=meta["id"],
        acquisition_time=_parse_time(meta["time"]),
        origin_lat=meta["origin_lat"],
        origin_lon=meta["origin_lon"],
        heading=meta["heading_deg"],
        channels=channels,
    )
