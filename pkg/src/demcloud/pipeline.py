"""Pipeline stages over a content-addressed work directory.

Every stage reads and writes only the documented file formats inside
``<work_dir>/<config_hash>/``, so runs with different configurations can
never cross-contaminate, and re-running a stage with unchanged inputs
reproduces its outputs byte for byte. ``run_pipeline`` chains the stages
in order; each stage can equally be invoked on its own through the CLI.
"""

from __future__ import annotations

import json
import os
import platform
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import ensemble as ens
from . import metrics, mosaic, patching, raster, synth, texture
from .config import PipelineConfig
from .errors import DataError
from .segnet import checkpoint as ckpt
from .segnet import predict as net_predict
from .segnet import train as net_train


# ---------------------------------------------------------------------------
# Layout helpers
# ---------------------------------------------------------------------------


def work_root(cfg: PipelineConfig) -> str:
    return os.path.join(cfg.work_dir, cfg.config_hash())


def _ensure(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _strip_file(t: int) -> str:
    return f"strip_{t:04d}.cfdr"


def _truth_file(t: int) -> str:
    return f"truth_{t:04d}.pgm"


def _window_dir(w: int) -> str:
    return f"w{w:02d}"


def _update_manifest(cfg: PipelineConfig, root: str, stage: str, summary: dict) -> None:
    path = os.path.join(root, "run_manifest.json")
    doc = {
        "config_hash": cfg.config_hash(),
        "config": cfg.resolved(),
        "versions": {
            "demcloud": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "stages": {},
    }
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            prev = json.load(fh)
        if prev.get("config_hash") == doc["config_hash"]:
            doc["stages"] = prev.get("stages", {})
    doc["stages"][stage] = summary
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_sequence(cfg: PipelineConfig, root: str) -> mosaic.StripSequence:
    if cfg.input_manifest is not None:
        return mosaic.read_manifest(cfg.input_manifest)
    manifest = os.path.join(root, "strips", "manifest.txt")
    if not os.path.exists(manifest):
        raise DataError("no strip manifest found; run the synth stage first")
    return mosaic.read_manifest(manifest)


def _truth_dir(cfg: PipelineConfig, root: str) -> str:
    return cfg.truth_dir if cfg.truth_dir is not None else os.path.join(root, "strips")


def _holdout_timesteps(cfg: PipelineConfig, seq: mosaic.StripSequence) -> set[int]:
    if cfg.eval_holdout <= 0:
        return set()
    return {t for t, _ in seq.strips[-cfg.eval_holdout :]}


def _threads(cfg: PipelineConfig) -> int:
    return cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_synth(cfg: PipelineConfig, verbose: bool = False) -> dict:
    if cfg.synth is None:
        raise DataError("config has no [synth] section")
    root = _ensure(work_root(cfg))
    strips_dir = _ensure(os.path.join(root, "strips"))
    seq, truths, _terrain = synth.gen_dataset(cfg.synth)
    entries = []
    for (t, grid), truth in zip(seq.strips, truths):
        raster.write_dem(grid, os.path.join(strips_dir, _strip_file(t)))
        raster.write_mask(truth, os.path.join(strips_dir, _truth_file(t)))
        entries.append((t, _strip_file(t)))
    mosaic.write_manifest(entries, os.path.join(strips_dir, "manifest.txt"))
    summary = {"strips": len(entries), "frame": [cfg.synth.height, cfg.synth.width]}
    _update_manifest(cfg, root, "synth", summary)
    return summary


def stage_mosaic(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    seq = _load_sequence(cfg, root)
    out_dir = _ensure(os.path.join(root, "mosaic"))
    truth_dir = _truth_dir(cfg, root)
    mosaics = mosaic.accumulate(seq)
    nodata = seq.nodata
    clipped = 0
    prev = raster.DemGrid(values=np.full(seq.shape, np.float32(nodata), np.float32), nodata=nodata)
    for (t, strip), mos in zip(seq.strips, mosaics):
        raster.write_dem(mos, os.path.join(out_dir, f"mosaic_{t:04d}.cfdr"))
        motion = mosaic.motion_mask(prev, strip)
        raster.write_mask(motion, os.path.join(out_dir, f"motion_{t:04d}.pgm"))
        truth_path = os.path.join(truth_dir, _truth_file(t))
        if os.path.exists(truth_path):
            truth = raster.read_mask(truth_path)
            clipped_mask = mosaic.clip_mask(truth, motion)
            raster.write_mask(clipped_mask, os.path.join(out_dir, f"truth_clipped_{t:04d}.pgm"))
            clipped += 1
        prev = mos
    summary = {"mosaics": len(mosaics), "clipped_truths": clipped}
    _update_manifest(cfg, root, "mosaic", summary)
    return summary


def stage_patch(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    seq = _load_sequence(cfg, root)
    holdout = _holdout_timesteps(cfg, seq)
    patches_dir = _ensure(os.path.join(root, "patches"))
    spec = cfg.patch_spec
    index = {
        "patch": spec.patch,
        "overlap": spec.overlap,
        "parent_width": seq.strips[0][1].width,
        "parent_height": seq.strips[0][1].height,
        "strips": [],
    }
    n_cloudy = 0
    for t, strip in seq.strips:
        strip_dir = _ensure(os.path.join(patches_dir, f"strip_{t:04d}"))
        dem_set = patching.split(strip.values, spec)
        patching.save_patchset(dem_set, os.path.join(strip_dir, "dem"), "dem", nodata=strip.nodata)
        entry = {
            "timestep": t,
            "holdout": t in holdout,
            "origins": [[p.ox, p.oy] for p in dem_set.patches],
            "cloudy": None,
        }
        clipped_path = os.path.join(root, "mosaic", f"truth_clipped_{t:04d}.pgm")
        if os.path.exists(clipped_path):
            mask = raster.read_mask(clipped_path)
            mask_set = patching.split(mask.values, spec)
            patching.save_patchset(mask_set, os.path.join(strip_dir, "mask"), "mask")
            pairs = patching.filter_cloudy(dem_set, mask_set)
            entry["cloudy"] = [[d.ox, d.oy] for d, _ in pairs]
            if t not in holdout:
                n_cloudy += len(pairs)
        index["strips"].append(entry)
    with open(os.path.join(patches_dir, "index.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=1, sort_keys=True)
        fh.write("\n")
    summary = {"strips": len(index["strips"]), "training_cloudy_patches": n_cloudy}
    _update_manifest(cfg, root, "patch", summary)
    return summary


def _read_index(root: str) -> dict:
    path = os.path.join(root, "patches", "index.json")
    if not os.path.exists(path):
        raise DataError("no patch index found; run the patch stage first")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _resolve_bounds(cfg: PipelineConfig, root: str, index: dict) -> tuple[float, float]:
    if cfg.glcm_bounds is not None:
        return cfg.glcm_bounds
    lo, hi = np.inf, -np.inf
    for entry in index["strips"]:
        if entry["holdout"]:
            continue
        t = entry["timestep"]
        dem_dir = os.path.join(root, "patches", f"strip_{t:04d}", "dem")
        pset = patching.load_patchset(dem_dir)
        with open(os.path.join(dem_dir, "patchset.json"), encoding="utf-8") as fh:
            nodata = json.load(fh)["nodata"]
        for p in pset.patches:
            valid = p.values != np.float32(nodata)
            if valid.any():
                lo = min(lo, float(p.values[valid].min()))
                hi = max(hi, float(p.values[valid].max()))
    if not np.isfinite(lo) or not np.isfinite(hi) or lo >= hi:
        raise DataError(f"cannot derive quantization bounds from training strips (got {lo}..{hi})")
    return lo, hi


def _dem_patches(root: str, t: int) -> tuple[dict, float]:
    dem_dir = os.path.join(root, "patches", f"strip_{t:04d}", "dem")
    if not os.path.isdir(dem_dir):
        raise DataError(f"missing DEM patches for strip {t}; run the patch stage first")
    pset = patching.load_patchset(dem_dir)
    with open(os.path.join(dem_dir, "patchset.json"), encoding="utf-8") as fh:
        nodata = json.load(fh)["nodata"]
    return {(p.ox, p.oy): p.values for p in pset.patches}, nodata


def stage_texture(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    index = _read_index(root)
    bounds = _resolve_bounds(cfg, root, index)
    tex_root = _ensure(os.path.join(root, "texture"))
    with open(os.path.join(tex_root, "bounds.json"), "w", encoding="utf-8") as fh:
        json.dump({"bounds": list(bounds),
                   "source": "config" if cfg.glcm_bounds else "training_strips"},
                  fh, sort_keys=True)
        fh.write("\n")

    train_tuples = []  # (timestep, ox, oy) of labelled cloud-bearing training patches
    all_tuples = []
    for entry in index["strips"]:
        t = entry["timestep"]
        for ox, oy in entry["origins"]:
            all_tuples.append((t, ox, oy))
        if not entry["holdout"] and entry["cloudy"]:
            for ox, oy in entry["cloudy"]:
                train_tuples.append((t, ox, oy))
    train_set = set(train_tuples)

    dem_cache: dict[int, tuple[dict, float]] = {}

    def patch_grid(t, ox, oy):
        if t not in dem_cache:
            dem_cache[t] = _dem_patches(root, t)
        values, nodata = dem_cache[t][0][(ox, oy)], dem_cache[t][1]
        return raster.DemGrid(values=values, nodata=nodata)

    n_workers = _threads(cfg)
    written = 0
    for w in cfg.glcm_windows:
        params = texture.GlcmParams(levels=cfg.glcm_levels, window=w, bounds=bounds)
        wdir = _ensure(os.path.join(tex_root, _window_dir(w)))
        for entry in index["strips"]:
            _ensure(os.path.join(wdir, f"strip_{entry['timestep']:04d}"))

        def stack_path(t, ox, oy):
            return os.path.join(wdir, f"strip_{t:04d}", f"patch_{ox}_{oy}.cfdr")

        # pass 1: raw stacks for the training set, accumulating channel stats
        def compute_raw(tup):
            t, ox, oy = tup
            raw = texture.texture_stack(patch_grid(t, ox, oy), params)
            raster.write_stack(raw.astype(np.float32), stack_path(t, ox, oy))
            return raw.min(axis=(0, 1)), raw.max(axis=(0, 1))

        if not train_tuples:
            raise DataError("no labelled cloud-bearing training patches; cannot derive stats")
        mins = np.full(texture.STACK_CHANNELS, np.inf)
        maxs = np.full(texture.STACK_CHANNELS, -np.inf)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for lo_c, hi_c in pool.map(compute_raw, train_tuples):
                mins = np.minimum(mins, lo_c)
                maxs = np.maximum(maxs, hi_c)
        stats = texture.ChannelStats(mins=mins, maxs=maxs)
        stats.save(os.path.join(tex_root, f"stats_{_window_dir(w)}.json"), params)

        # pass 2: normalize the raw training stacks in place
        for t, ox, oy in train_tuples:
            raw, _ = raster.read_stack(stack_path(t, ox, oy))
            raster.write_stack(stats.apply(raw).astype(np.float32), stack_path(t, ox, oy))

        # pass 3: everything else goes straight to normalized form
        rest = [tup for tup in all_tuples if tup not in train_set]

        def compute_normalized(tup):
            t, ox, oy = tup
            vol = texture.texture_stack(patch_grid(t, ox, oy), params, stats=stats)
            raster.write_stack(vol.astype(np.float32), stack_path(t, ox, oy))

        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(compute_normalized, rest))
        written += len(all_tuples)
        if verbose:
            print(f"texture: window {w}: {len(all_tuples)} stacks "
                  f"({len(train_tuples)} training)")
    summary = {"bounds": list(bounds), "stacks": written,
               "windows": list(cfg.glcm_windows)}
    _update_manifest(cfg, root, "texture", summary)
    return summary


def _training_dataset(cfg: PipelineConfig, root: str, index: dict, w: int):
    """(stack, mask) pairs for every cloud-bearing patch of a training strip."""
    wdir = os.path.join(root, "texture", _window_dir(w))
    dataset = []
    for entry in index["strips"]:
        if entry["holdout"] or not entry["cloudy"]:
            continue
        t = entry["timestep"]
        mask_dir = os.path.join(root, "patches", f"strip_{t:04d}", "mask")
        for ox, oy in entry["cloudy"]:
            stack_file = os.path.join(wdir, f"strip_{t:04d}", f"patch_{ox}_{oy}.cfdr")
            if not os.path.exists(stack_file):
                raise DataError(f"missing texture stack {stack_file}; run the texture stage first")
            stack, _ = raster.read_stack(stack_file)
            mask = raster.read_mask(os.path.join(mask_dir, patching.patch_filename(ox, oy, "mask")))
            dataset.append((stack, mask.values))
    if not dataset:
        raise DataError("no labelled training patches available")
    return dataset


def stage_train(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    index = _read_index(root)
    summary = {}
    for w in cfg.glcm_windows:
        dataset = _training_dataset(cfg, root, index, w)
        progress = (lambda line: print(f"train w{w}: {line}")) if verbose else None
        result = net_train.train(dataset, cfg.train, cfg.unet, progress=progress)
        mdir = _ensure(os.path.join(root, "models", _window_dir(w)))
        ckpt.save_checkpoint(cfg.unet, result.params, os.path.join(mdir, "checkpoint.cfnn"))
        with open(os.path.join(mdir, "metrics.tsv"), "w", encoding="utf-8") as fh:
            fh.write("epoch\ttrain_loss\tval_loss\tval_miou\n")
            for line in result.log:
                fh.write(line + "\n")
        summary[_window_dir(w)] = {
            "patches": len(dataset),
            "best_epoch": result.best_epoch,
            "best_val_miou": result.best_val_miou,
        }
    _update_manifest(cfg, root, "train", summary)
    return summary


def stage_predict(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    index = _read_index(root)
    spec = patching.PatchSpec(patch=index["patch"], overlap=index["overlap"])
    n_workers = _threads(cfg)
    n_patches = 0
    for w in cfg.glcm_windows:
        ckpt_path = os.path.join(root, "models", _window_dir(w), "checkpoint.cfnn")
        if not os.path.exists(ckpt_path):
            raise DataError(f"missing checkpoint {ckpt_path}; run the train stage first")
        net_cfg, params = ckpt.load_checkpoint(ckpt_path)
        wdir = os.path.join(root, "texture", _window_dir(w))
        for entry in index["strips"]:
            t = entry["timestep"]

            def predict_one(origin):
                ox, oy = origin
                stack_file = os.path.join(wdir, f"strip_{t:04d}", f"patch_{ox}_{oy}.cfdr")
                stack, _ = raster.read_stack(stack_file)
                conf = net_predict(net_cfg, params, stack)
                return patching.Patch(ox=ox, oy=oy, values=conf.astype(np.float32))

            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                patches = list(pool.map(predict_one, [tuple(o) for o in entry["origins"]]))
            pset = patching.PatchSet(
                patches=tuple(patches),
                parent_width=index["parent_width"],
                parent_height=index["parent_height"],
                spec=spec,
            )
            out_dir = os.path.join(root, "predict", _window_dir(w), f"strip_{t:04d}")
            patching.save_patchset(pset, out_dir, "confidence")
            n_patches += len(patches)
        if verbose:
            print(f"predict: window {w} done")
    summary = {"patches": n_patches}
    _update_manifest(cfg, root, "predict", summary)
    return summary


def stage_stitch(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    index = _read_index(root)
    n = 0
    for w in cfg.glcm_windows:
        out_dir = _ensure(os.path.join(root, "stitched", _window_dir(w)))
        for entry in index["strips"]:
            t = entry["timestep"]
            pdir = os.path.join(root, "predict", _window_dir(w), f"strip_{t:04d}")
            if not os.path.isdir(pdir):
                raise DataError(f"missing predictions {pdir}; run the predict stage first")
            pset = patching.load_patchset(pdir)
            full = patching.stitch(pset)
            raster.write_confidence(
                raster.ConfidenceGrid(values=full.astype(np.float32)),
                os.path.join(out_dir, f"conf_{t:04d}.cfdr"),
            )
            n += 1
    summary = {"frames": n}
    _update_manifest(cfg, root, "stitch", summary)
    return summary


def stage_ensemble(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    seq = _load_sequence(cfg, root)
    masks_dir = _ensure(os.path.join(root, "masks"))
    cleaned_dir = _ensure(os.path.join(root, "cleaned"))
    out_masks = _ensure(os.path.join(cfg.output_dir, "masks"))
    out_cleaned = _ensure(os.path.join(cfg.output_dir, "cleaned"))
    for t, strip in seq.strips:
        members = []
        for w in cfg.glcm_windows:
            path = os.path.join(root, "stitched", _window_dir(w), f"conf_{t:04d}.cfdr")
            if not os.path.exists(path):
                raise DataError(f"missing stitched confidence {path}; run the stitch stage first")
            members.append(raster.read_confidence(path))
        combined = ens.combine(*members)
        raster.write_confidence(combined, os.path.join(masks_dir, f"combined_{t:04d}.cfdr"))
        mask = ens.dilate(ens.threshold(combined, cfg.ensemble.threshold), cfg.ensemble.kernel)
        for d in (masks_dir, out_masks):
            raster.write_mask(mask, os.path.join(d, f"final_{t:04d}.pgm"))
        cleaned = mosaic.apply_mask(strip, mask)
        for d in (cleaned_dir, out_cleaned):
            raster.write_dem(cleaned, os.path.join(d, _strip_file(t)))
    summary = {"frames": len(seq.strips)}
    _update_manifest(cfg, root, "ensemble", summary)
    return summary


def _fmt(v) -> str:
    if v is None:
        return "NA"
    return f"{v:.6f}"


def stage_evaluate(cfg: PipelineConfig, verbose: bool = False) -> dict:
    root = _ensure(work_root(cfg))
    seq = _load_sequence(cfg, root)
    holdout = _holdout_timesteps(cfg, seq)
    report_dir = _ensure(os.path.join(root, "report"))

    rows = []
    total = metrics.ConfusionMatrix(0, 0, 0, 0)
    aps = []
    for t, _strip in seq.strips:
        if holdout and t not in holdout:
            continue
        truth_path = os.path.join(root, "mosaic", f"truth_clipped_{t:04d}.pgm")
        if not os.path.exists(truth_path):
            if holdout:
                raise DataError(f"no ground truth for held-out strip {t}")
            continue
        pred_path = os.path.join(root, "masks", f"final_{t:04d}.pgm")
        if not os.path.exists(pred_path):
            raise DataError(f"missing final mask {pred_path}; run the ensemble stage first")
        pred = raster.read_mask(pred_path)
        truth = raster.read_mask(truth_path)
        valid = raster.read_mask(os.path.join(root, "mosaic", f"motion_{t:04d}.pgm"))
        combined = raster.read_confidence(os.path.join(root, "masks", f"combined_{t:04d}.cfdr"))
        cm = metrics.confusion(pred.values, truth.values, valid=valid.values)
        ap = metrics.average_precision(combined.values, truth.values, valid=valid.values)
        iou_cloud, iou_clear, miou = metrics.iou(cm)
        pr = metrics.pr_stats(cm)
        rows.append((str(t), cm, iou_cloud, iou_clear, miou, pr, ap))
        total = total + cm
        aps.append(ap)
    if not rows:
        raise DataError("nothing to evaluate: no strips with ground truth")

    iou_cloud, iou_clear, miou = metrics.iou(total)
    pr = metrics.pr_stats(total)
    mAP = metrics.mean_average_precision(aps)
    rows.append(("ALL", total, iou_cloud, iou_clear, miou, pr, mAP))

    header = ("frame", "tp", "fp", "fn", "tn", "iou_cloud", "iou_clear",
              "miou", "precision", "recall", "accuracy", "ap")
    lines = ["\t".join(header)]
    for name, cm, ic, il, mi, p, ap in rows:
        lines.append("\t".join([
            name, str(cm.tp), str(cm.fp), str(cm.fn), str(cm.tn),
            _fmt(ic), _fmt(il), _fmt(mi),
            _fmt(p.precision), _fmt(p.recall), _fmt(p.accuracy), _fmt(ap),
        ]))
    report = "\n".join(lines) + "\n"
    for d in (report_dir, _ensure(cfg.output_dir)):
        with open(os.path.join(d, "report.tsv"), "w", encoding="utf-8") as fh:
            fh.write(report)
    block = metrics.render_confusion(total)
    with open(os.path.join(report_dir, "confusion.txt"), "w", encoding="utf-8") as fh:
        fh.write(block + "\n")
    if verbose:
        print(block)

    summary = {
        "frames": len(rows) - 1,
        "miou": miou,
        "recall": pr.recall,
        "precision": pr.precision,
        "accuracy": pr.accuracy,
        "map": mAP,
    }
    _update_manifest(cfg, root, "evaluate", summary)
    return summary


STAGES = ("synth", "mosaic", "patch", "texture", "train",
          "predict", "stitch", "ensemble", "evaluate")

_STAGE_FN = {
    "synth": stage_synth,
    "mosaic": stage_mosaic,
    "patch": stage_patch,
    "texture": stage_texture,
    "train": stage_train,
    "predict": stage_predict,
    "stitch": stage_stitch,
    "ensemble": stage_ensemble,
    "evaluate": stage_evaluate,
}


def run_stage(name: str, cfg: PipelineConfig, verbose: bool = False) -> dict:
    return _STAGE_FN[name](cfg, verbose=verbose)


def run_pipeline(cfg: PipelineConfig, verbose: bool = False) -> dict:
    """The full chain, identical to invoking each stage in sequence."""
    result: dict = {}
    for name in STAGES:
        if name == "synth" and cfg.synth is None:
            continue
        if verbose:
            print(f"=== stage: {name}")
        result = run_stage(name, cfg, verbose=verbose)
    return result


def hillshade_file(input_path, output_path, azimuth: float = 315.0,
                   altitude: float = 45.0, z_factor: float = 1.0) -> None:
    grid = raster.read_dem(input_path)
    raster.write_gray(raster.hillshade(grid, azimuth, altitude, z_factor), output_path)
