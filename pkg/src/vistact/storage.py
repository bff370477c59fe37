"""On-disk dataset format.

Layout:
    <root>/<split>/<seq_id>/vision_0000.png ... vision_NNNN.png
                            touch_0000.png  ... touch_NNNN.png
                            ref_vision.png
                            ref_touch.png
                            annotation.json
    <root>/manifest.json

PNGs are 8-bit RGB. annotation.json carries the per-frame ground truth,
the marker grid geometry, and the generating seeds; see README for the
key-by-key description.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import DataError
from .sim import ContactAnnotation, GridSpec, TouchSequence

FORMAT_VERSION = 1
SPLITS = ("train", "test_seen", "test_unseen")


def to_uchar(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)


def from_uchar(image: np.ndarray) -> np.ndarray:
    return image.astype(np.float32) / 255.0


def _write_png(path: Path, image: np.ndarray) -> None:
    Image.fromarray(to_uchar(image), mode="RGB").save(path)


def _read_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return from_uchar(np.asarray(img.convert("RGB")))


def save_sequence(root: Path, split: str, seq: TouchSequence,
                  scene_seed: int, touch_seed: int) -> Path:
    seq_dir = Path(root) / split / seq.seq_id
    seq_dir.mkdir(parents=True, exist_ok=True)
    for t in range(seq.num_frames):
        _write_png(seq_dir / f"vision_{t:04d}.png", seq.vision[t])
        _write_png(seq_dir / f"touch_{t:04d}.png", seq.touch[t])
    _write_png(seq_dir / "ref_vision.png", seq.ref_vision)
    _write_png(seq_dir / "ref_touch.png", seq.ref_touch)

    ann = seq.annotation
    payload = {
        "format_version": FORMAT_VERSION,
        "canvas_size": list(seq.scene.canvas_size),
        "num_frames": seq.num_frames,
        "target": list(seq.script.target),
        "peak_pressure": seq.script.peak_pressure,
        "phase_frames": [seq.script.approach_frames, seq.script.press_frames,
                         seq.script.release_frames],
        "pressure": ann.pressures.tolist(),
        "in_contact": ann.in_contact.astype(int).tolist(),
        "center": ann.centers.tolist(),
        "t_on": ann.t_on,
        "t_off": ann.t_off,
        "marker_grid": {
            "rows": ann.grid.rows,
            "cols": ann.grid.cols,
            "positions": ann.grid.positions.tolist(),
        },
        "marker_displacements": ann.marker_displacements.tolist(),
        "scene_seed": scene_seed,
        "touch_seed": touch_seed,
    }
    with open(seq_dir / "annotation.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True)
    return seq_dir


@dataclass
class LoadedSequence:
    """A sequence read back from disk, images as float32 in [0, 1]."""

    seq_id: str
    vision: np.ndarray
    touch: np.ndarray
    ref_vision: np.ndarray
    ref_touch: np.ndarray
    annotation: ContactAnnotation
    target: tuple[float, float]
    scene_seed: int
    touch_seed: int

    @property
    def num_frames(self) -> int:
        return self.vision.shape[0]


def load_sequence(seq_dir: Path) -> LoadedSequence:
    seq_dir = Path(seq_dir)
    ann_path = seq_dir / "annotation.json"
    if not ann_path.exists():
        raise DataError(f"missing annotation file {ann_path}")
    with open(ann_path) as fh:
        payload = json.load(fh)
    t_total = payload["num_frames"]

    vision = np.stack([_read_png(seq_dir / f"vision_{t:04d}.png") for t in range(t_total)])
    touch = np.stack([_read_png(seq_dir / f"touch_{t:04d}.png") for t in range(t_total)])
    grid = GridSpec(rows=payload["marker_grid"]["rows"],
                    cols=payload["marker_grid"]["cols"],
                    positions=np.asarray(payload["marker_grid"]["positions"]))
    annotation = ContactAnnotation(
        centers=np.asarray(payload["center"]),
        pressures=np.asarray(payload["pressure"]),
        in_contact=np.asarray(payload["in_contact"], dtype=bool),
        marker_displacements=np.asarray(payload["marker_displacements"]),
        t_on=payload["t_on"],
        t_off=payload["t_off"],
        grid=grid,
    )
    return LoadedSequence(
        seq_id=seq_dir.name,
        vision=vision,
        touch=touch,
        ref_vision=_read_png(seq_dir / "ref_vision.png"),
        ref_touch=_read_png(seq_dir / "ref_touch.png"),
        annotation=annotation,
        target=tuple(payload["target"]),
        scene_seed=payload["scene_seed"],
        touch_seed=payload["touch_seed"],
    )


def write_manifest(root: Path, manifest: dict) -> None:
    with open(Path(root) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)


def read_manifest(root: Path) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DataError(f"missing dataset manifest {path}")
    with open(path) as fh:
        return json.load(fh)


def load_split(root: Path, split: str,
               limit: Optional[int] = None) -> list[LoadedSequence]:
    manifest = read_manifest(root)
    if split not in manifest["splits"]:
        raise DataError(f"split '{split}' not in manifest (have {list(manifest['splits'])})")
    seq_ids = manifest["splits"][split]
    if limit is not None:
        seq_ids = seq_ids[:limit]
    return [load_sequence(Path(root) / split / sid) for sid in seq_ids]
