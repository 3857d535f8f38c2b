"""Evaluation harness: error metrics, rain-bin stratification, buoy
collocation, and the anemometer-height wind law.

Two stratification schemes exist because the reporting conventions differ:
`table2` uses four half-open rate bins [0,1), [1,3), [3,10), [10, inf);
`table3` uses three bins below-1 / 1-to-3-inclusive / above-3.  Both are
keyed by rain RATE in mm/h; when only categorical rain classes are
available, class codes are mapped in (the closed upper boundary of table3's
middle bin cannot be represented then — the boundary pixel conservatively
counts as rain).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

HEIGHT_LAW_EXPONENT = 0.11
EARTH_METERS_PER_DEG = 111_320.0

TABLE2_BINS = ("[0,1)", "[1,3)", "[3,10)", ">=10")
TABLE3_BINS = ("<1", "[1,3]", ">3")
SCHEMES = {"table2": TABLE2_BINS, "table3": TABLE3_BINS}


# ---------------------------------------------------------------------------
# scalar metrics


def _pair(reference, predicted):
    r = np.asarray(reference, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if r.shape != p.shape:
        raise ValueError("reference and predicted must have the same length")
    ok = np.isfinite(r) & np.isfinite(p)
    r, p = r[ok], p[ok]
    if r.size == 0:
        raise ValueError("no finite record pairs")
    return r, p


def rmse(reference, predicted) -> float:
    r, p = _pair(reference, predicted)
    return float(np.sqrt(np.mean((p - r) ** 2)))


def bias(reference, predicted) -> float:
    """Mean of predicted minus reference (positive = overestimation)."""
    r, p = _pair(reference, predicted)
    return float(np.mean(p - r))


def pcc(reference, predicted) -> float:
    """Pearson correlation; NaN flags the undefined zero-variance case."""
    r, p = _pair(reference, predicted)
    if r.size < 2:
        raise ValueError("pcc needs at least 2 records")
    sr = r - r.mean()
    sp = p - p.mean()
    denom = np.sqrt((sr * sr).sum() * (sp * sp).sum())
    if denom == 0:
        return float("nan")
    return float((sr * sp).sum() / denom)


def wind_at_height(w10, h):
    """Power-law conversion of 10 m wind to height h: w * (h/10)^0.11."""
    h_arr = np.asarray(h, dtype=np.float64)
    if np.any(h_arr <= 0):
        raise ValueError("height must be positive")
    out = np.asarray(w10, dtype=np.float64) * (h_arr / 10.0) ** HEIGHT_LAW_EXPONENT
    if np.isscalar(w10) and np.isscalar(h):
        return float(out)
    return out


# ---------------------------------------------------------------------------
# stratification


def stratify_rates(rates, scheme: str = "table3") -> dict:
    """Bin masks over rain rates (mm/h); the masks partition finite rates."""
    rates = np.asarray(rates, dtype=np.float64)
    if scheme == "table2":
        return {
            "[0,1)": (rates >= 0) & (rates < 1),
            "[1,3)": (rates >= 1) & (rates < 3),
            "[3,10)": (rates >= 3) & (rates < 10),
            ">=10": rates >= 10,
        }
    if scheme == "table3":
        return {
            "<1": (rates >= 0) & (rates < 1),
            "[1,3]": (rates >= 1) & (rates <= 3),
            ">3": rates > 3,
        }
    raise ValueError(f"unknown stratification scheme {scheme!r}")


def stratify_classes(classes, scheme: str = "table3") -> dict:
    """Bin masks from categorical rain classes {0,1,2,3}.

    Class 2 starts exactly at 3 mm/h, so the rate-3.0 pixel lands in the
    rain bin under table3 here (the closed [1,3] boundary needs rates).
    """
    c = np.asarray(classes, dtype=np.float64)
    if scheme == "table2":
        return {"[0,1)": c == 0, "[1,3)": c == 1, "[3,10)": c == 2, ">=10": c == 3}
    if scheme == "table3":
        return {"<1": c == 0, "[1,3]": c == 1, ">3": c >= 2}
    raise ValueError(f"unknown stratification scheme {scheme!r}")


def stratified_metrics(reference, predicted, rates=None, classes=None,
                       scheme: str = "table3") -> dict:
    """bias/rmse/pcc per rain bin; bins with no pairs report n=0 and NaNs."""
    if rates is not None:
        masks = stratify_rates(rates, scheme)
    elif classes is not None:
        masks = stratify_classes(classes, scheme)
    else:
        raise ValueError("need rates or classes to stratify")
    reference = np.asarray(reference, dtype=np.float64).ravel()
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    out = {}
    for label, mask in masks.items():
        m = mask.ravel() & np.isfinite(reference) & np.isfinite(predicted)
        n = int(m.sum())
        if n == 0:
            out[label] = {"n": 0, "bias": float("nan"), "rmse": float("nan"),
                          "pcc": float("nan")}
            continue
        r, p = reference[m], predicted[m]
        out[label] = {
            "n": n,
            "bias": bias(r, p),
            "rmse": rmse(r, p),
            "pcc": pcc(r, p) if n >= 2 else float("nan"),
        }
    return out


# ---------------------------------------------------------------------------
# records


@dataclass
class EvalRecord:
    reference_wind: float
    predicted_wind: float
    rain_rate: float = float("nan")
    rain_class: int | None = None
    source: str = "model"


@dataclass
class BuoyRecord:
    station: str
    time: datetime
    lat: float
    lon: float
    anemometer_height: float
    wspd: float
    gust: float

    def __post_init__(self):
        if self.anemometer_height <= 0:
            raise ValueError("anemometer height must be positive")


BUOY_CSV_HEADER = ["station", "time", "lat", "lon", "height_m", "wspd", "gust"]


def _fmt_time(t: datetime) -> str:
    return t.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_time(s: str) -> datetime:
    return datetime.strptime(s, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def write_buoys_csv(records, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(BUOY_CSV_HEADER)
        for r in records:
            w.writerow([r.station, _fmt_time(r.time), f"{r.lat:.6f}",
                        f"{r.lon:.6f}", f"{r.anemometer_height:g}",
                        f"{r.wspd:.4f}", f"{r.gust:.4f}"])


def read_buoys_csv(path):
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(BUOY_CSV_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"buoy CSV missing columns {sorted(missing)}")
        for row in reader:
            out.append(BuoyRecord(
                station=row["station"],
                time=_parse_time(row["time"]),
                lat=float(row["lat"]),
                lon=float(row["lon"]),
                anemometer_height=float(row["height_m"]),
                wspd=float(row["wspd"]),
                gust=float(row["gust"]),
            ))
    return out


# ---------------------------------------------------------------------------
# geolocation (flat-earth; adequate at the <= 100 km scene scale)


def pixel_latlon(scene, row, col):
    """Lat/lon of a pixel center: rows run along the heading, columns along
    heading + 90 deg (right-looking)."""
    spacing = next(iter(scene.channels.values())).pixel_spacing
    h = math.radians(scene.heading)
    north = (row * math.cos(h) - col * math.sin(h)) * spacing
    east = (row * math.sin(h) + col * math.cos(h)) * spacing
    lat = scene.origin_lat + north / EARTH_METERS_PER_DEG
    lon = scene.origin_lon + east / (
        EARTH_METERS_PER_DEG * math.cos(math.radians(scene.origin_lat))
    )
    return lat, lon


def latlon_pixel(scene, lat, lon):
    """Inverse of pixel_latlon: fractional (row, col) for a lat/lon."""
    spacing = next(iter(scene.channels.values())).pixel_spacing
    north = (lat - scene.origin_lat) * EARTH_METERS_PER_DEG
    east = (lon - scene.origin_lon) * EARTH_METERS_PER_DEG * math.cos(
        math.radians(scene.origin_lat)
    )
    h = math.radians(scene.heading)
    row = (north * math.cos(h) + east * math.sin(h)) / spacing
    col = (-north * math.sin(h) + east * math.cos(h)) / spacing
    return row, col


def collocate(scenes, buoys, max_dt_minutes: float = 10.0,
              max_dist_km: float = 1.0, wind_channel: str = "wspd_gmf",
              height_correct: bool = True):
    """Pair buoy samples with the nearest scene pixel.

    For every (scene, station): the station sample nearest in time within
    the window, matched to the nearest pixel center within the distance cap.
    SAR wind is converted to the buoy's anemometer height before comparison
    (set height_correct=False for the inverse convention, raw-vs-raw).
    Returns (records, skipped) where skipped lists (station, scene_id,
    reason) for every failed match.
    """
    by_station = {}
    for b in buoys:
        by_station.setdefault(b.station, []).append(b)
    for samples in by_station.values():
        samples.sort(key=lambda b: b.time)

    records, skipped = [], []
    for scene in scenes:
        if wind_channel not in scene.channels:
            raise ValueError(f"scene {scene.id} lacks channel {wind_channel}")
        wind = scene.channels[wind_channel].values
        rain_cls = scene.channels.get("rain_class")
        rain_rate = scene.channels.get("rain_rate")
        spacing = next(iter(scene.channels.values())).pixel_spacing
        for station, samples in sorted(by_station.items()):
            nearest = min(
                samples,
                key=lambda b: abs((b.time - scene.acquisition_time).total_seconds()),
            )
            dt = abs((nearest.time - scene.acquisition_time).total_seconds())
            if dt > max_dt_minutes * 60.0:
                skipped.append((station, scene.id, f"dt {dt/60:.1f} min > window"))
                continue
            fr, fc = latlon_pixel(scene, nearest.lat, nearest.lon)
            r = int(round(fr))
            c = int(round(fc))
            if not (0 <= r < wind.shape[0] and 0 <= c < wind.shape[1]):
                skipped.append((station, scene.id, "outside scene footprint"))
                continue
            dist = math.hypot((fr - r) * spacing, (fc - c) * spacing)
            if dist > max_dist_km * 1000.0:
                skipped.append((station, scene.id, f"dist {dist:.0f} m > cap"))
                continue
            sar = wind[r, c]
            if not np.isfinite(sar):
                skipped.append((station, scene.id, "no valid wind at pixel"))
                continue
            if height_correct:
                sar = wind_at_height(float(sar), nearest.anemometer_height)
            records.append(EvalRecord(
                reference_wind=nearest.wspd,
                predicted_wind=float(sar),
                rain_rate=(float(rain_rate.values[r, c])
                           if rain_rate is not None else float("nan")),
                rain_class=(int(rain_cls.values[r, c])
                            if rain_cls is not None
                            and np.isfinite(rain_cls.values[r, c]) else None),
                source="buoy",
            ))
    return records, skipped


def records_metrics(records, scheme: str = "table3") -> dict:
    """Stratified metrics over EvalRecords (rates preferred, classes as
    fallback when every rate is NaN)."""
    if not records:
        raise ValueError("no records to evaluate")
    ref = np.array([r.reference_wind for r in records])
    pred = np.array([r.predicted_wind for r in records])
    rates = np.array([r.rain_rate for r in records])
    if np.all(np.isnan(rates)):
        classes = np.array([
            r.rain_class if r.rain_class is not None else np.nan for r in records
        ])
        return stratified_metrics(ref, pred, classes=classes, scheme=scheme)
    return stratified_metrics(ref, pred, rates=rates, scheme=scheme)


# ---------------------------------------------------------------------------
# report formatting


def _cell(values, metric):
    vals = [v for v in values if not (isinstance(v, float) and math.isnan(v))]
    if not vals:
        return "n/a"
    if metric == "n":
        return str(int(vals[0])) if len(vals) == 1 else str(int(np.mean(vals)))
    if len(vals) == 1:
        return f"{vals[0]:.3f}"
    return f"{np.mean(vals):.3f} ({np.std(vals):.3f})"


def format_report(results: dict, scheme: str = "table3") -> str:
    """Aligned text table: rows n/Bias/RMSE/PCC per model, columns rain bins.

    ``results`` maps model name -> list of per-run stratified-metric dicts
    (one dict per repeated training; a single run is the common case).
    Multi-run cells show mean (std).
    """
    bins = SCHEMES[scheme]
    metric_rows = [("n", "n"), ("Bias", "bias"), ("RMSE", "rmse"), ("PCC", "pcc")]
    width = 16
    lines = []
    header = f"{'':<24}" + "".join(f"{b:>{width}}" for b in bins)
    lines.append(header)
    lines.append("-" * len(header))
    for model in sorted(results):
        runs = results[model]
        for label, key in metric_rows:
            row = f"{model + ' ' + label:<24}"
            for b in bins:
                row += f"{_cell([run[b][key] for run in runs], key):>{width}}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def report_csv_rows(results: dict, scheme: str = "table3"):
    bins = SCHEMES[scheme]
    rows = [["model", "metric"] + list(bins)]
    for model in sorted(results):
        runs = results[model]
        for key in ("n", "bias", "rmse", "pcc"):
            rows.append([model, key] + [
                _cell([run[b][key] for run in runs], key) for b in bins
            ])
    return rows


def write_report(results: dict, scheme: str, text_path, csv_path):
    Path(text_path).write_text(format_report(results, scheme))
    with open(csv_path, "w", newline="") as f:
        csv.writer(f).writerows(report_csv_rows(results, scheme))
