"""Declarative pipeline configuration.

Configs are INI-style text: nested [section] headers with key = value
lines. Core science knobs (patching, GLCM, training, ensemble, seed) are
required so a config file fully pins an experiment; architecture and
plumbing fields carry the standard defaults. Validation reports every
problem as "section.key: message". The resolved configuration hashes to a
12-hex digest used to address the work directory, so runs with different
settings can never mix stage outputs.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass

from .ensemble import EnsembleConfig
from .errors import ConfigError, DataError
from .patching import PatchSpec
from .segnet import TrainConfig, UNetConfig
from .synth import SynthConfig
from .texture import STACK_CHANNELS, GlcmParams


@dataclass(frozen=True)
class PipelineConfig:
    work_dir: str
    output_dir: str
    input_manifest: str | None
    truth_dir: str | None
    patch_spec: PatchSpec
    glcm_levels: int
    glcm_windows: tuple[int, ...]
    glcm_bounds: tuple[float, float] | None
    unet: UNetConfig
    train: TrainConfig
    ensemble: EnsembleConfig
    synth: SynthConfig | None
    seed: int
    threads: int
    eval_holdout: int

    def resolved(self) -> dict:
        """Canonical plain-dict form; the basis of the config hash."""
        doc = {
            "paths": {
                "work_dir": self.work_dir,
                "output_dir": self.output_dir,
                "input_manifest": self.input_manifest,
                "truth_dir": self.truth_dir,
            },
            "patch": {"size": self.patch_spec.patch, "overlap": self.patch_spec.overlap},
            "glcm": {
                "levels": self.glcm_levels,
                "windows": list(self.glcm_windows),
                "bounds": list(self.glcm_bounds) if self.glcm_bounds else None,
            },
            "unet": {
                "in_channels": self.unet.in_channels,
                "classes": self.unet.class_count,
                "encoder": list(self.unet.encoder),
                "bottleneck": self.unet.bottleneck,
                "decoder": list(self.unet.decoder),
            },
            "train": {
                "lr": self.train.lr,
                "epochs": self.train.epochs,
                "weights": list(self.train.class_weights),
                "batch_size": self.train.batch_size,
                "val_fraction": self.train.val_fraction,
                "test_fraction": self.train.test_fraction,
            },
            "ensemble": {
                "threshold": self.ensemble.threshold,
                "dilate": list(self.ensemble.kernel),
            },
            "run": {
                "seed": self.seed,
                "eval_holdout": self.eval_holdout,
            },
        }
        if self.synth is not None:
            s = self.synth
            doc["synth"] = {
                "width": s.width, "height": s.height, "strips": s.strip_count,
                "octaves": s.octaves, "amplitude": s.amplitude, "roughness": s.roughness,
                "base_elevation": s.base_elevation,
                "blob_count": [s.blob_count_min, s.blob_count_max],
                "blob_radius": [s.blob_radius_min, s.blob_radius_max],
                "cloud_offset": [s.cloud_offset_min, s.cloud_offset_max],
                "haze_probability": s.haze_probability,
                "haze_offset": s.haze_offset,
                "footprint_min_frac": s.footprint_min_frac,
                "seed": s.seed,
            }
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors: list[str] = []

    def _fetch(self, section, key, cast, required, default, describe):
        if not self.parser.has_option(section, key):
            if required:
                self.errors.append(f"{section}.{key}: missing required {describe}")
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return cast(raw)
        except (ValueError, TypeError):
            self.errors.append(f"{section}.{key}: cannot parse {raw!r} as {describe}")
            return default

    def get_int(self, section, key, required=True, default=None):
        return self._fetch(section, key, int, required, default, "integer")

    def get_float(self, section, key, required=True, default=None):
        return self._fetch(section, key, float, required, default, "number")

    def get_str(self, section, key, required=True, default=None):
        return self._fetch(section, key, str, required, default, "string")

    def get_int_list(self, section, key, required=True, default=None):
        cast = lambda raw: tuple(int(p.strip()) for p in raw.split(","))
        return self._fetch(section, key, cast, required, default, "comma-separated integers")

    def get_float_list(self, section, key, required=True, default=None):
        cast = lambda raw: tuple(float(p.strip()) for p in raw.split(","))
        return self._fetch(section, key, cast, required, default, "comma-separated numbers")


def load_config(path, seed_override: int | None = None,
                threads_override: int | None = None) -> PipelineConfig:
    """Parse and validate a config file.

    Raises ConfigError listing every field-level problem found.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    r = _Reader(parser)
    work_dir = r.get_str("paths", "work_dir")
    output_dir = r.get_str("paths", "output_dir")
    input_manifest = r.get_str("paths", "input_manifest", required=False)
    truth_dir = r.get_str("paths", "truth_dir", required=False)

    patch_size = r.get_int("patch", "size")
    patch_overlap = r.get_int("patch", "overlap")

    levels = r.get_int("glcm", "levels")
    windows = r.get_int_list("glcm", "windows")
    bounds_min = r.get_float("glcm", "bounds_min", required=False)
    bounds_max = r.get_float("glcm", "bounds_max", required=False)

    in_channels = r.get_int("unet", "in_channels", required=False, default=STACK_CHANNELS)
    classes = r.get_int("unet", "classes", required=False, default=2)
    encoder = r.get_int_list("unet", "encoder", required=False, default=(32, 64, 128, 256))
    bottleneck = r.get_int("unet", "bottleneck", required=False, default=512)
    decoder = r.get_int_list("unet", "decoder", required=False, default=(256, 128, 64, 16))

    lr = r.get_float("train", "lr")
    epochs = r.get_int("train", "epochs")
    weights = r.get_float_list("train", "weights")
    batch_size = r.get_int("train", "batch_size", required=False, default=4)
    val_fraction = r.get_float("train", "val_fraction", required=False, default=0.2)
    test_fraction = r.get_float("train", "test_fraction", required=False, default=0.2)

    threshold = r.get_float("ensemble", "threshold")
    dilate = r.get_int_list("ensemble", "dilate", required=False, default=(5, 5))

    seed = r.get_int("run", "seed")
    threads = r.get_int("run", "threads", required=False, default=0)
    eval_holdout = r.get_int("run", "eval_holdout", required=False, default=0)

    synth = None
    if parser.has_section("synth"):
        synth_fields = dict(
            width=r.get_int("synth", "width"),
            height=r.get_int("synth", "height"),
            strip_count=r.get_int("synth", "strips"),
            octaves=r.get_int("synth", "octaves", required=False, default=6),
            amplitude=r.get_float("synth", "amplitude", required=False, default=100.0),
            roughness=r.get_float("synth", "roughness", required=False, default=0.5),
            base_elevation=r.get_float("synth", "base_elevation", required=False, default=500.0),
            blob_count_min=r.get_int("synth", "blob_count_min", required=False, default=1),
            blob_count_max=r.get_int("synth", "blob_count_max", required=False, default=3),
            blob_radius_min=r.get_float("synth", "blob_radius_min", required=False, default=4.0),
            blob_radius_max=r.get_float("synth", "blob_radius_max", required=False, default=14.0),
            cloud_offset_min=r.get_float("synth", "cloud_offset_min", required=False, default=500.0),
            cloud_offset_max=r.get_float("synth", "cloud_offset_max", required=False, default=3000.0),
            haze_probability=r.get_float("synth", "haze_probability", required=False, default=0.0),
            haze_offset=r.get_float("synth", "haze_offset", required=False, default=80.0),
            footprint_min_frac=r.get_float("synth", "footprint_min_frac", required=False, default=0.6),
        )
    if seed_override is not None:
        seed = seed_override
    if threads_override is not None:
        threads = threads_override

    errors = r.errors
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))

    def check(cond, message):
        if not cond:
            errors.append(message)

    check(input_manifest is None or not parser.has_section("synth"),
          "paths.input_manifest: give either an input manifest or a [synth] section, not both")
    check(input_manifest is not None or parser.has_section("synth"),
          "paths.input_manifest: missing (and no [synth] section to generate data)")
    if input_manifest is not None:
        check(os.path.isfile(input_manifest),
              f"paths.input_manifest: file not found: {input_manifest}")
    check(patch_size % 16 == 0, f"patch.size: {patch_size} must be divisible by 16")
    check(0 < patch_overlap < patch_size,
          f"patch.overlap: need 0 < overlap < patch size, got {patch_overlap}")
    check(levels >= 2, f"glcm.levels: must be >= 2, got {levels}")
    check(len(windows) >= 1, "glcm.windows: need at least one window size")
    for w in windows:
        check(w >= 3 and w % 2 == 1, f"glcm.windows: window {w} must be odd and >= 3")
    check(len(set(windows)) == len(windows), "glcm.windows: duplicate window sizes")
    check((bounds_min is None) == (bounds_max is None),
          "glcm.bounds_min/bounds_max: give both bounds or neither")
    if bounds_min is not None and bounds_max is not None:
        check(bounds_min < bounds_max, "glcm.bounds_min: must be below glcm.bounds_max")
    check(in_channels == STACK_CHANNELS,
          f"unet.in_channels: must be {STACK_CHANNELS} (13 features x 4 offsets), got {in_channels}")
    check(classes == 2, f"unet.classes: must be 2, got {classes}")
    check(len(encoder) == 4, "unet.encoder: need exactly 4 channel counts")
    check(len(decoder) == 4, "unet.decoder: need exactly 4 channel counts")
    check(len(weights) == classes, f"train.weights: need {classes} weights")
    check(all(w > 0 for w in weights), "train.weights: weights must be positive")
    check(lr is not None and lr > 0, f"train.lr: must be positive, got {lr}")
    check(epochs is not None and epochs >= 1, f"train.epochs: must be >= 1, got {epochs}")
    check(batch_size >= 1, f"train.batch_size: must be >= 1, got {batch_size}")
    check(0 < val_fraction + test_fraction < 1,
          "train.val_fraction/test_fraction: fractions must leave room for a training split")
    check(0.0 < threshold < 1.0, f"ensemble.threshold: must be in (0, 1), got {threshold}")
    check(len(dilate) in (1, 2), "ensemble.dilate: give one or two odd kernel dims")
    for k in dilate:
        check(k >= 1 and k % 2 == 1, f"ensemble.dilate: kernel dim {k} must be odd")
    check(eval_holdout >= 0, f"run.eval_holdout: must be >= 0, got {eval_holdout}")
    check(threads >= 0, f"run.threads: must be >= 0, got {threads}")
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))

    kernel = (dilate[0], dilate[0]) if len(dilate) == 1 else (dilate[0], dilate[1])
    try:
        cfg = PipelineConfig(
            work_dir=work_dir,
            output_dir=output_dir,
            input_manifest=input_manifest,
            truth_dir=truth_dir,
            patch_spec=PatchSpec(patch=patch_size, overlap=patch_overlap),
            glcm_levels=levels,
            glcm_windows=tuple(windows),
            glcm_bounds=(bounds_min, bounds_max) if bounds_min is not None else None,
            unet=UNetConfig(
                in_channels=in_channels, class_count=classes,
                encoder=tuple(encoder), bottleneck=bottleneck, decoder=tuple(decoder),
            ),
            train=TrainConfig(
                lr=lr, epochs=epochs, class_weights=tuple(weights),
                batch_size=batch_size, val_fraction=val_fraction,
                test_fraction=test_fraction, seed=seed,
            ),
            ensemble=EnsembleConfig(threshold=threshold, kernel=kernel),
            synth=SynthConfig(seed=seed, **synth_fields) if parser.has_section("synth") else None,
            seed=seed,
            threads=threads,
            eval_holdout=eval_holdout,
        )
    except DataError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc

    if cfg.synth is not None:
        for w in (cfg.synth.width, cfg.synth.height):
            if w < patch_size:
                raise ConfigError(
                    f"synth.width/height: frame {cfg.synth.width}x{cfg.synth.height} "
                    f"smaller than patch.size {patch_size}"
                )
        if cfg.eval_holdout >= cfg.synth.strip_count:
            raise ConfigError("run.eval_holdout: must leave at least one training strip")
    return cfg


def glcm_params_for(cfg: PipelineConfig, window: int, bounds: tuple[float, float]) -> GlcmParams:
    return GlcmParams(levels=cfg.glcm_levels, window=window, bounds=bounds)
