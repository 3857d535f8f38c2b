"""Command-line pipeline driver.

Each subcommand runs one stage against a workspace directory and refreshes
the artifact manifest; `run-all` chains them in order.  Stages are ordered
by their data dependencies:

    synth -> invert -> extract -> balance -> split -> stats -> evaluate -> report

Configuration comes from defaults, then an optional key=value file
(--config), then explicit flags, later sources winning.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from . import balance as bal
from . import metrics as met
from . import patches as pat
from . import split as spl
from . import stats as sta
from . import store
from . import synth
from .cmod5n import InversionConfig, invert_scene
from .scene import read_scene, write_scene
from .store import Workspace, atomic_write_json, atomic_write_text


class StageError(Exception):
    """A stage could not run; the message includes what to do about it."""

    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


# ---------------------------------------------------------------------------
# configuration


def parse_config_file(path) -> dict:
    """key=value lines; '#' starts a comment; values become int or float
    when they parse as one."""
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            for cast in (int, float):
                try:
                    value = cast(value)
                    break
                except ValueError:
                    pass
            out[key] = value
    return out


PIPELINE_KEYS = ("iterations", "policy", "bins", "n_buoys", "buoy_noise_std")


def build_settings(args) -> dict:
    """Merge defaults <- config file <- flags into one flat dict."""
    synth_fields = {f.name for f in dataclasses.fields(synth.SynthParams)}
    cfg = {
        "seed": 0,
        "iterations": 20_000,
        "policy": "scheme1",
        "bins": "table3",
        "n_buoys": 2,
        "buoy_noise_std": 0.1,
    }
    if getattr(args, "config", None):
        for k, v in parse_config_file(args.config).items():
            if k not in synth_fields and k not in PIPELINE_KEYS and k != "seed":
                raise ValueError(f"unknown config key {k!r}")
            cfg[k] = v
    for flag in ("seed", "scenes", "iterations", "policy", "bins"):
        v = getattr(args, flag, None)
        if v is not None:
            cfg["n_scenes" if flag == "scenes" else flag] = v
    return cfg


def synth_params(cfg) -> synth.SynthParams:
    fields = {f.name for f in dataclasses.fields(synth.SynthParams)}
    return synth.SynthParams(**{k: v for k, v in cfg.items() if k in fields})


def manifest_config(cfg) -> dict:
    """The run-identity subset recorded in the manifest (no paths, nothing
    machine-specific)."""
    keep = ("seed", "n_scenes", "rows", "cols", "iterations", "policy", "bins")
    return {k: cfg[k] for k in keep if k in cfg}


# ---------------------------------------------------------------------------
# stages


def stage_synth(ws: Workspace, cfg) -> list:
    ws.ensure_layout()
    p = synth_params(cfg)
    buoys = []
    paths = []
    for i in range(p.n_scenes):
        scene = synth.gen_scene(p, i, compute_gmf=False)
        d = write_scene(scene, ws.path("scenes", scene.id))
        atomic_write_json(d / "truth.json",
                          {"index": i, "scene_seed": synth.scene_seed(p.seed, i)})
        buoy_seed = int(np.random.SeedSequence([p.seed, i, 1]).generate_state(1)[0])
        buoys.extend(synth.gen_buoys([scene], n_buoys=cfg["n_buoys"],
                                     noise_std=cfg["buoy_noise_std"],
                                     seed=buoy_seed))
        paths.extend(sorted(d.iterdir()))
        if (i + 1) % 50 == 0 or i + 1 == p.n_scenes:
            print(f"synth: {i + 1}/{p.n_scenes} scenes")
    buoy_path = ws.path("scenes", "buoys.csv")
    met.write_buoys_csv(buoys, buoy_path)
    paths.append(buoy_path)
    return paths


def stage_invert(ws: Workspace, cfg) -> list:
    dirs = ws.scene_dirs()
    if not dirs:
        raise StageError("invert", "no scenes found; run `sarwind synth` first")
    inv = InversionConfig()
    paths = []

    def inverted():
        for k, d in enumerate(dirs):
            scene = read_scene(d)
            scene.channels["wspd_gmf"] = invert_scene(scene, inv)
            write_scene(scene, d)
            paths.extend(sorted(p for p in d.iterdir() if p.suffix != ".json"))
            paths.append(d / "meta.json")
            if (k + 1) % 50 == 0 or k + 1 == len(dirs):
                print(f"invert: {k + 1}/{len(dirs)} scenes")
            yield scene

    floor = synth.measure_speckle_floor(inverted())
    floor_path = ws.path("reports", "speckle_floor.json")
    atomic_write_json(floor_path, floor)
    paths.append(floor_path)
    print(f"invert: rain-free retrieval floor {floor['floor_ms']:.3f} m/s "
          f"over {floor['n_pixels']} pixels")
    return paths


def stage_extract(ws: Workspace, cfg) -> list:
    dirs = ws.scene_dirs()
    if not dirs:
        raise StageError("extract", "no scenes found; run `sarwind synth` first")
    patch_dir = ws.path("patches")
    paths = []
    lines = []
    counts = {"rain": 0, "rainless": 0, "discarded": 0}
    channel_order = None
    for k, d in enumerate(dirs):
        scene = read_scene(d)
        if "wspd_gmf" not in scene.channels:
            raise StageError(
                "extract",
                f"scene {scene.id} has no retrieved wind; run `sarwind invert` first",
            )
        if channel_order is None:
            channel_order = sorted(scene.channels)
            pat.write_patch_meta(patch_dir, pat.PATCH_SIZE, channel_order)
            paths.append(patch_dir / "patches_meta.json")
        for p in pat.extract_patches(scene):
            counts[p.category] += 1
            if p.category != "discarded":
                paths.append(pat.write_patch_blob(p, patch_dir, channel_order))
            lines.append(json.dumps(pat.catalog_row(p), sort_keys=True))
        if (k + 1) % 50 == 0 or k + 1 == len(dirs):
            print(f"extract: {k + 1}/{len(dirs)} scenes")
    catalog = patch_dir / "patches.jsonl"
    atomic_write_text(catalog, "\n".join(lines) + "\n")
    paths.append(catalog)
    print(f"extract: {counts['rain']} rain / {counts['rainless']} rainless / "
          f"{counts['discarded']} discarded tiles")
    if counts["rain"] == 0:
        raise StageError("extract", "corpus produced no rain patches; "
                         "raise rain_cells_lambda or the scene count")
    return paths


def _load_pools(ws: Workspace):
    catalog = ws.path("patches", "patches.jsonl")
    if not catalog.exists():
        raise StageError("balance", "no patch catalog; run `sarwind extract` first")
    rows = pat.read_catalog(ws.path("patches"))
    refs = [pat.PatchRef.from_row(r) for r in rows]
    rain = [r for r in refs if r.category == "rain"]
    rainless = [r for r in refs if r.category == "rainless"]
    return rows, rain, rainless


def stage_balance(ws: Workspace, cfg) -> list:
    _, rain, rainless = _load_pools(ws)
    policy = cfg["policy"]
    seed = cfg["seed"]
    if policy == "scheme2":
        plan = bal.scheme2_plan(rain, rainless, seed=seed)
    elif policy in ("scheme1", "eq5-as-printed"):
        plan = bal.scheme1_plan(rain, rainless, seed=seed, policy=policy)
    else:
        raise StageError("balance", f"unknown policy {policy!r}; choose "
                         "scheme1, scheme2 or eq5-as-printed")

    wind_of = {r.id: r.mean_label_wind for r in rain + rainless}
    P = bal.histogram([r.mean_label_wind for r in rain + rainless])
    P_plus = bal.histogram([wind_of[i] for i in plan.selected_rain])
    P_minus = bal.histogram([wind_of[i] for i in plan.selected_rainless])
    err = bal.balance_error(P, P_plus, P_minus)
    obj = bal.plan_to_json(plan)
    obj["balance_error"] = err
    obj["histograms"] = {
        "P": bal.histogram_to_json(P),
        "P_plus": bal.histogram_to_json(P_plus),
        "P_minus": bal.histogram_to_json(P_minus),
    }
    plan_path = ws.path("plans", "balance.json")
    atomic_write_json(plan_path, obj)
    csv_path = ws.path("plans", "histograms.csv")
    bal.export_histogram_csv({"P": P, "P_plus": P_plus, "P_minus": P_minus}, csv_path)
    print(f"balance[{policy}]: {plan.n_plus} rain + {plan.n_minus} rainless "
          f"selected, balance error {err:.3f}")
    return [plan_path, csv_path]


def _load_selection(ws: Workspace, stage):
    plan_path = ws.path("plans", "balance.json")
    if not plan_path.exists():
        raise StageError(stage, "no balance plan; run `sarwind balance` first")
    obj = json.loads(plan_path.read_text())
    return set(obj["selected_rain"]) | set(obj["selected_rainless"])


def stage_split(ws: Workspace, cfg) -> list:
    rows, rain, rainless = _load_pools(ws)
    selected = _load_selection(ws, "split")
    refs = [r for r in rain + rainless if r.id in selected]
    stats = spl.scene_stats(refs)
    assignment = spl.stochastic_split(
        stats, spl.SplitConfig(iterations=cfg["iterations"], seed=cfg["seed"])
    )
    assign_path = ws.path("splits", "assignment.json")
    spl.save_assignment(assignment, assign_path)

    for row in rows:
        rid = f"{row['scene_id']}_{row['row0']}_{row['col0']}"
        row["subset"] = (assignment.subset_of(row["scene_id"])
                         if rid in selected else None)
    catalog = ws.path("patches", "patches.jsonl")
    atomic_write_text(
        catalog, "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
    )

    report = spl.verify_no_leakage(assignment, rows)
    leak_path = ws.path("splits", "leakage_report.json")
    atomic_write_json(leak_path, report)
    print(f"split: e={assignment.e:.6f} "
          f"(val {len(assignment.val_scenes)} / test {len(assignment.test_scenes)} "
          f"scenes), fractions {report['fractions']}")
    if not report["passed"]:
        raise StageError("split", "leakage check failed: "
                         + "; ".join(report["problems"][:5]))
    return [assign_path, catalog, leak_path]


def _blob_stream(ws: Workspace, ids, meta):
    for pid in ids:
        path = ws.path("patches", f"{pid}.f32")
        if not path.exists():
            raise StageError("stats", f"missing patch blob {path.name}; "
                             "re-run `sarwind extract`")
        yield pid, pat.read_patch_blob(path, meta)


def stage_stats(ws: Workspace, cfg) -> list:
    if not ws.path("splits", "assignment.json").exists():
        raise StageError("stats", "no split assignment; run `sarwind split` first")
    rows = pat.read_catalog(ws.path("patches"))
    train_ids = sorted(
        f"{r['scene_id']}_{r['row0']}_{r['col0']}"
        for r in rows
        if r.get("subset") == "train"
    )
    if not train_ids:
        raise StageError("stats", "catalog has no train-subset patches; "
                         "run `sarwind split` first")
    meta = json.loads(ws.path("patches", "patches_meta.json").read_text())
    stats = sta.compute_stats(_blob_stream(ws, train_ids, meta))
    out = ws.path("stats", "stats.json")
    sta.save_stats(stats, out)
    print(f"stats: {len(train_ids)} train patches, "
          f"fingerprint {stats.train_fingerprint[:12]}")
    return [out]


def stage_evaluate(ws: Workspace, cfg, pred_channel="wspd_gmf") -> list:
    assign_path = ws.path("splits", "assignment.json")
    if not assign_path.exists():
        raise StageError("evaluate", "no split assignment; run `sarwind split` first")
    assignment = spl.load_assignment(assign_path)
    rows = pat.read_catalog(ws.path("patches"))
    by_scene = {}
    for r in rows:
        if r.get("subset") == "test":
            by_scene.setdefault(r["scene_id"], []).append(r)
    if not by_scene:
        raise StageError("evaluate", "no test-subset patches in the catalog")

    ref_parts, pred_parts, rate_parts = [], [], []
    for sid in sorted(by_scene):
        scene = read_scene(ws.path("scenes", sid))
        if pred_channel not in scene.channels:
            raise StageError(
                "evaluate",
                f"scene {sid} has no channel {pred_channel!r}; "
                "write predictions into the scene directory first",
            )
        pred = scene.channels[pred_channel].values
        ref = scene.channels["wspd_model"].values
        rate = scene.channels["rain_rate"].values
        for r in by_scene[sid]:
            r0, c0 = r["row0"], r["col0"]
            size = r.get("size", pat.PATCH_SIZE)
            win = (slice(r0, r0 + size), slice(c0, c0 + size))
            ref_parts.append(ref[win].ravel())
            pred_parts.append(pred[win].ravel())
            rate_parts.append(rate[win].ravel())

    scheme = cfg["bins"]
    result = met.stratified_metrics(
        np.concatenate(ref_parts), np.concatenate(pred_parts),
        rates=np.concatenate(rate_parts), scheme=scheme,
    )
    out = ws.path("reports", f"eval_{pred_channel}_{scheme}.json")
    atomic_write_json(out, {"label": pred_channel, "scheme": scheme,
                            "bins": result})
    paths = [out]
    for b, m in result.items():
        print(f"evaluate[{pred_channel}] {b}: n={m['n']} bias={m['bias']:+.3f} "
              f"rmse={m['rmse']:.3f} pcc={m['pcc']:.3f}")

    buoy_csv = ws.path("scenes", "buoys.csv")
    if buoy_csv.exists():
        buoys = met.read_buoys_csv(buoy_csv)
        test_scenes = [read_scene(ws.path("scenes", sid))
                       for sid in assignment.test_scenes]
        records, skipped = met.collocate(test_scenes, buoys,
                                         wind_channel=pred_channel)
        if records:
            bres = met.records_metrics(records, scheme=scheme)
            bout = ws.path("reports", f"buoy_eval_{pred_channel}_{scheme}.json")
            atomic_write_json(bout, {"label": f"{pred_channel} vs buoy",
                                     "scheme": scheme, "bins": bres,
                                     "n_records": len(records),
                                     "n_skipped": len(skipped)})
            paths.append(bout)
            print(f"evaluate: {len(records)} buoy matches ({len(skipped)} skipped)")
    return paths


def stage_report(ws: Workspace, cfg) -> list:
    scheme = cfg["bins"]
    results = {}
    for p in sorted(ws.path("reports").glob(f"eval_*_{scheme}.json")):
        obj = json.loads(p.read_text())
        results.setdefault(obj["label"], []).append(obj["bins"])
    if not results:
        raise StageError("report", f"no {scheme} evaluations found; "
                         "run `sarwind evaluate` first")
    text_path = ws.path("reports", f"report_{scheme}.txt")
    csv_path = ws.path("reports", f"report_{scheme}.csv")
    met.write_report(results, scheme, text_path, csv_path)
    print(text_path.read_text())
    return [text_path, csv_path]


# ---------------------------------------------------------------------------
# command wiring


STAGES = {
    "synth": stage_synth,
    "invert": stage_invert,
    "extract": stage_extract,
    "balance": stage_balance,
    "split": stage_split,
    "stats": stage_stats,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_stage(name, ws, cfg, **kwargs):
    t0 = time.monotonic()
    paths = STAGES[name](ws, cfg, **kwargs)
    ws.write_manifest(config=manifest_config(cfg), full_rescan=False,
                      updated_paths=paths)
    print(f"[{name}] done in {time.monotonic() - t0:.1f}s")


def cmd_verify(args):
    ws = Workspace(args.workspace)
    report = store.verify_workspace(ws.root)
    catalog = ws.path("patches", "patches.jsonl")
    if catalog.exists():
        print("catalog:", json.dumps(store.summarize_catalog(catalog)))
    print(f"verify: checked {report['checked']} artifacts")
    for p in report["problems"]:
        print(f"  problem: {p}")
    if not report["passed"]:
        return 1
    print("verify: OK")
    return 0


def cmd_summarize(args):
    ws = Workspace(args.workspace)
    catalog = ws.path("patches", "patches.jsonl")
    if not catalog.exists():
        print("no patch catalog yet", file=sys.stderr)
        return 1
    print(json.dumps(store.summarize_catalog(catalog), indent=2, sort_keys=True))
    return 0


def cmd_stage(args):
    ws = Workspace(args.workspace)
    cfg = build_settings(args)
    kwargs = {}
    if args.command == "evaluate":
        kwargs["pred_channel"] = args.pred_channel
    run_stage(args.command, ws, cfg, **kwargs)
    return 0


def cmd_run_all(args):
    ws = Workspace(args.workspace)
    cfg = build_settings(args)
    t0 = time.monotonic()
    for name in STAGES:
        kwargs = {"pred_channel": args.pred_channel} if name == "evaluate" else {}
        t1 = time.monotonic()
        paths = STAGES[name](ws, cfg, **kwargs)
        ws.write_manifest(config=manifest_config(cfg), full_rescan=False,
                          updated_paths=paths)
        print(f"[{name}] done in {time.monotonic() - t1:.1f}s")
    ws.write_manifest(config=manifest_config(cfg), full_rescan=True)
    report = store.verify_workspace(ws.root)
    print(f"run-all: {time.monotonic() - t0:.1f}s total, "
          f"{report['checked']} artifacts")
    if not report["passed"]:
        for p in report["problems"]:
            print(f"  problem: {p}")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sarwind",
        description="Synthetic SAR wind pipeline: scene synthesis, GMF "
                    "inversion, rain-balanced patch datasets, evaluation.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--workspace", required=True,
                       help="dataset root (created if missing)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None,
                       help="key=value settings file")

    for name, help_text in [
        ("synth", "render the synthetic scene corpus and buoy records"),
        ("invert", "retrieve wind from sigma0 and record the rain-free floor"),
        ("extract", "tile scenes into 256x256 patches with a catalog"),
        ("balance", "plan the rain/rainless balanced selection"),
        ("split", "assign scenes to train/val/test without leakage"),
        ("stats", "train-subset channel moments for normalization"),
        ("evaluate", "stratified metrics on the test subset"),
        ("report", "aggregate evaluations into text/CSV tables"),
    ]:
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name == "synth":
            p.add_argument("--scenes", type=int, default=None,
                           help="corpus size (overrides config n_scenes)")
        if name == "balance":
            p.add_argument("--policy",
                           choices=["scheme1", "scheme2", "eq5-as-printed"],
                           default=None)
        if name == "split":
            p.add_argument("--iterations", type=int, default=None)
        if name in ("evaluate", "report"):
            p.add_argument("--bins", choices=["table2", "table3"], default=None)
        if name == "evaluate":
            p.add_argument("--pred-channel", default="wspd_gmf",
                           help="scene channel holding the predicted wind")
        p.set_defaults(func=cmd_stage)

    p = sub.add_parser("run-all", help="run every stage in order")
    common(p)
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--policy", choices=["scheme1", "scheme2", "eq5-as-printed"],
                   default=None)
    p.add_argument("--bins", choices=["table2", "table3"], default=None)
    p.add_argument("--pred-channel", default="wspd_gmf")
    p.set_defaults(func=cmd_run_all)

    p = sub.add_parser("verify", help="re-hash artifacts against the manifest")
    p.add_argument("--workspace", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("summarize", help="stream the patch catalog counts")
    p.add_argument("--workspace", required=True)
    p.set_defaults(func=cmd_summarize)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as e:
        print(f"error [{e.stage}]: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
