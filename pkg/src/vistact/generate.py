"""Dataset generation: scenes, touch scripts, splits, manifest.

Splits mirror how generalization is probed: `test_seen` reuses training
scenes with fresh touches, `test_unseen` uses scenes whose seeds never
appear in training. Seeds are derived arithmetically from the global seed
in disjoint namespaces, so the split separation is structural rather than
probabilistic.
"""

from __future__ import annotations

import math
import shutil
from pathlib import Path

import numpy as np

from .config import DataGenConfig
from .errors import DataError
from .sim import (SceneConfig, TactileParams, TouchScript, make_scene,
                  sample_touch_target, synthesize_sequence)
from .storage import save_sequence, write_manifest

SCENE_SPAN = 500_000     # train scene seeds: base..base+SCENE_SPAN-1; unseen above
TOUCH_BASE = 1_000_000_000


def scene_config(cfg: DataGenConfig) -> SceneConfig:
    return SceneConfig(canvas_size=(cfg.canvas, cfg.canvas),
                       object_count=cfg.object_count)


def tactile_params(cfg: DataGenConfig) -> TactileParams:
    return TactileParams(canvas_size=(cfg.canvas, cfg.canvas),
                         marker_rows=cfg.marker_rows, marker_cols=cfg.marker_cols,
                         push_amplitude=cfg.push_amplitude, push_sigma=cfg.push_sigma,
                         indent_sigma=cfg.indent_sigma, indent_depth=cfg.indent_depth)


def generate_dataset(cfg: DataGenConfig, seed: int, out_dir: Path,
                     force: bool = False) -> dict:
    """Write a full train/test_seen/test_unseen dataset; returns the manifest."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise DataError(f"output directory {out_dir} is not empty (use --force)")
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    base = seed * 10_000_000
    n_scenes = max(1, math.ceil(cfg.n_train / max(1, cfg.touches_per_scene)))
    train_scene_seeds = [base + i for i in range(n_scenes)]
    unseen_scene_seeds = [base + SCENE_SPAN + j for j in range(cfg.n_test_unseen)]

    scfg = scene_config(cfg)
    tparams = tactile_params(cfg)
    manifest = {
        "format_version": 1,
        "seed": seed,
        "canvas": cfg.canvas,
        "frames": cfg.approach_frames + cfg.press_frames + cfg.release_frames,
        "marker_grid": [cfg.marker_rows, cfg.marker_cols],
        "splits": {"train": [], "test_seen": [], "test_unseen": []},
        "scene_seeds": {},
        "touch_seeds": {},
    }

    touch_counter = 0

    def emit(split: str, index: int, scene_seed: int) -> None:
        nonlocal touch_counter
        touch_seed = base + TOUCH_BASE + touch_counter
        touch_counter += 1
        seq_id = f"{split}_{index:03d}"
        scene = make_scene(scfg, scene_seed)
        rng = np.random.default_rng(touch_seed)
        target = sample_touch_target(scene, rng, desk_prob=cfg.desk_touch_prob)
        script = TouchScript(target=target,
                             approach_frames=cfg.approach_frames,
                             press_frames=cfg.press_frames,
                             release_frames=cfg.release_frames,
                             peak_pressure=float(rng.uniform(*cfg.peak_pressure_range)))
        seq = synthesize_sequence(scene, script, tactile_params=tparams, seq_id=seq_id)
        save_sequence(out_dir, split, seq, scene_seed=scene_seed, touch_seed=touch_seed)
        manifest["splits"][split].append(seq_id)
        manifest["scene_seeds"][seq_id] = scene_seed
        manifest["touch_seeds"][seq_id] = touch_seed

    for i in range(cfg.n_train):
        emit("train", i, train_scene_seeds[i % n_scenes])
    for i in range(cfg.n_test_seen):
        emit("test_seen", i, train_scene_seeds[i % n_scenes])
    for i in range(cfg.n_test_unseen):
        emit("test_unseen", i, unseen_scene_seeds[i])

    write_manifest(out_dir, manifest)
    return manifest
