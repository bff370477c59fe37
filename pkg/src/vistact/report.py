"""Frame-by-frame prediction over test sequences and metric aggregation.

For each sequence the checkpointed generator is run once per frame on the
clamped temporal window, and the resulting stream is scored: contact
interval and marker deformation against the tracked ground truth in the
vision-to-touch direction, touch localization against the annotated press
point in the opposite direction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .data import temporal_window, to_grayscale
from .errors import ConfigError
from .metrics import (ContactInterval, analytic_deformation_curve, contact_error,
                      deformation_curve, marker_deformation_error,
                      moment_of_contact, touch_location_error)
from .model import ModelParams, load_checkpoint, params_from_checkpoint
from .sim import GridSpec, VisionParams
from .storage import LoadedSequence, load_split
from .train import _train_config_from_dict

REPORT_NAME = "report.json"
SEQUENCES_CSV = "sequences.csv"


@dataclass(frozen=True)
class EvalConfig:
    checkpoint: str = ""
    out: str = "reports/run"
    splits: tuple[str, ...] = ("test_seen", "test_unseen")
    contact_ratio: float = 0.6
    residual_threshold: float = 0.1
    flat_tol: float = 0.0
    batch: int = 16
    plots: bool = True
    use_ground_truth: bool = False   # score the ground truth as if predicted


def center_crop_offset(full: int, size: int) -> int:
    if size > full:
        raise ConfigError(f"crop {size} larger than frame {full}")
    return (full - size) // 2


def crop_frames(frames: np.ndarray, size: int) -> tuple[np.ndarray, int, int]:
    h, w = frames.shape[-3:-1]
    oy, ox = center_crop_offset(h, size), center_crop_offset(w, size)
    return frames[..., oy:oy + size, ox:ox + size, :], ox, oy


def predict_sequence(params: ModelParams, seq: LoadedSequence, direction: str,
                     temporal: bool = True, use_reference: bool = True,
                     batch: int = 16) -> np.ndarray:
    """Generate the cross-modal stream for every frame of a sequence.

    Frames and references are center-cropped to the model resolution.
    Returns (T, s, s, 3) float32 in [0, 1].
    """
    size = params.config.image_size
    in_frames = seq.vision if direction == "v2t" else seq.touch
    in_crop, _, _ = crop_frames(in_frames, size)
    ref_v, _, _ = crop_frames(seq.ref_vision[None], size)
    ref_t, _, _ = crop_frames(seq.ref_touch[None], size)

    gray = to_grayscale(in_crop)
    t_total = len(in_frames)
    windows = np.stack([
        gray[temporal_window(t_total, t) if temporal else [t] * 5]
        for t in range(t_total)
    ])

    refs = np.concatenate([np.moveaxis(ref_v[0], -1, 0), np.moveaxis(ref_t[0], -1, 0)])
    refs_t = torch.from_numpy((refs * 2.0 - 1.0).astype(np.float32))
    if not use_reference:
        refs_t = torch.zeros_like(refs_t)

    g = params.generator
    g.eval()
    outputs = []
    with torch.no_grad():
        for start in range(0, t_total, batch):
            chunk = torch.from_numpy(
                (windows[start:start + batch] * 2.0 - 1.0).astype(np.float32))
            rep = refs_t.unsqueeze(0).expand(chunk.shape[0], -1, -1, -1)
            pred = g(chunk, rep)
            outputs.append(((pred + 1.0) / 2.0).clamp(0.0, 1.0).numpy())
    return np.moveaxis(np.concatenate(outputs), 1, -1).astype(np.float32)


def shifted_grid(grid: GridSpec, ox: int, oy: int) -> GridSpec:
    return GridSpec(rows=grid.rows, cols=grid.cols,
                    positions=grid.positions - np.array([ox, oy], dtype=float))


def evaluate_v2t_sequence(pred_touch: np.ndarray, seq: LoadedSequence,
                          cfg: EvalConfig) -> dict:
    """Contact interval and marker deformation scores for one sequence."""
    size = pred_touch.shape[1]
    gt_touch, ox, oy = crop_frames(seq.touch, size)
    ref, _, _ = crop_frames(seq.ref_touch[None], size)
    grid = shifted_grid(seq.annotation.grid, ox, oy)

    gt_curve = deformation_curve(gt_touch, ref[0], grid)
    pred_curve = deformation_curve(pred_touch, ref[0], grid)
    gt_interval = moment_of_contact(gt_curve, cfg.contact_ratio, cfg.flat_tol)
    pred_interval = moment_of_contact(pred_curve, cfg.contact_ratio, cfg.flat_tol)

    miss = pred_interval is None or gt_interval is None
    result = {
        "seq_id": seq.seq_id,
        "miss": miss,
        "contact_error": None if miss else contact_error(pred_interval, gt_interval),
        "pred_interval": None if pred_interval is None else [pred_interval.t_l, pred_interval.t_r],
        "gt_interval": None if gt_interval is None else [gt_interval.t_l, gt_interval.t_r],
        "marker_deformation_error": marker_deformation_error(pred_touch, gt_touch, ref[0], grid),
        "curve_pred": [round(float(v), 6) for v in pred_curve.values],
        "curve_gt": [round(float(v), 6) for v in gt_curve.values],
    }
    return result


def evaluate_t2v_sequence(pred_vision: np.ndarray, seq: LoadedSequence,
                          cfg: EvalConfig) -> dict:
    """Touch localization for contact frames of one sequence.

    The pad cannot be located while it touches nothing, so only frames
    with annotated contact are scored.
    """
    size = pred_vision.shape[1]
    ref, ox, oy = crop_frames(seq.ref_vision[None], size)
    contact_ts = np.nonzero(seq.annotation.in_contact)[0]
    errors = []
    misses = 0
    for t in contact_ts:
        gx, gy = seq.annotation.centers[t]
        err = touch_location_error(pred_vision[t], ref[0], (gx - ox, gy - oy),
                                   threshold=cfg.residual_threshold)
        if err is None:
            misses += 1
        else:
            errors.append(err)
    return {
        "seq_id": seq.seq_id,
        "n_contact_frames": int(len(contact_ts)),
        "n_miss": int(misses),
        "touch_location_error": None if not errors else round(float(np.median(errors)), 6),
    }


def _agg(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "std": None, "median": None, "count": 0}
    arr = np.asarray(values, dtype=float)
    return {"mean": round(float(arr.mean()), 6), "std": round(float(arr.std()), 6),
            "median": round(float(np.median(arr)), 6), "count": int(len(arr))}


def aggregate_split(rows: list[dict], direction: str) -> dict:
    if direction == "v2t":
        detected = [r["contact_error"] for r in rows if not r["miss"]]
        return {
            "contact_error": _agg(detected),
            "miss_rate": round(float(np.mean([r["miss"] for r in rows])), 6),
            "marker_deformation_error": _agg([r["marker_deformation_error"] for r in rows]),
        }
    located = [r["touch_location_error"] for r in rows if r["touch_location_error"] is not None]
    frames = sum(r["n_contact_frames"] for r in rows)
    misses = sum(r["n_miss"] for r in rows)
    return {
        "touch_location_error": _agg(located),
        "frame_miss_rate": round(misses / frames, 6) if frames else None,
    }


def run_evaluation(checkpoint_path: Path, dataset_root: Path, cfg: EvalConfig,
                   out_dir: Optional[Path] = None) -> dict:
    """Score a checkpoint on the configured splits and write the report."""
    payload = load_checkpoint(checkpoint_path)
    params = params_from_checkpoint(payload)
    train_cfg = _train_config_from_dict(payload["train_config"])
    direction = train_cfg.direction

    report = {
        "checkpoint": str(checkpoint_path),
        "direction": direction,
        "temporal": train_cfg.temporal,
        "use_reference": train_cfg.use_reference,
        "contact_ratio": cfg.contact_ratio,
        "splits": {},
    }
    for split in cfg.splits:
        sequences = load_split(dataset_root, split)
        rows = []
        for seq in sequences:
            if cfg.use_ground_truth:
                gt = seq.touch if direction == "v2t" else seq.vision
                pred, _, _ = crop_frames(gt, params.config.image_size)
            else:
                pred = predict_sequence(params, seq, direction,
                                        temporal=train_cfg.temporal,
                                        use_reference=train_cfg.use_reference,
                                        batch=cfg.batch)
            if direction == "v2t":
                rows.append(evaluate_v2t_sequence(pred, seq, cfg))
            else:
                rows.append(evaluate_t2v_sequence(pred, seq, cfg))
        report["splits"][split] = {
            "sequences": rows,
            "aggregate": aggregate_split(rows, direction),
        }

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report(report, out_dir)
        if cfg.plots and direction == "v2t":
            plot_deformation_curves(report, out_dir)
    return report


def write_report(report: dict, out_dir: Path) -> None:
    with open(Path(out_dir) / REPORT_NAME, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    rows = []
    for split, block in report["splits"].items():
        for row in block["sequences"]:
            flat = {k: v for k, v in row.items() if not k.startswith("curve_")}
            flat["split"] = split
            rows.append(flat)
    if rows:
        with open(Path(out_dir) / SEQUENCES_CSV, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)


def load_report(path: Path) -> dict:
    path = Path(path)
    with open(path if path.is_file() else path / REPORT_NAME) as fh:
        return json.load(fh)


def plot_deformation_curves(report: dict, out_dir: Path) -> list[Path]:
    """One PNG per sequence: predicted vs ground-truth deformation curve."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for split, block in report["splits"].items():
        for row in block["sequences"]:
            if "curve_pred" not in row:
                continue
            fig, ax = plt.subplots(figsize=(5, 3))
            ax.plot(row["curve_gt"], label="ground truth", color="black")
            ax.plot(row["curve_pred"], label="predicted", color="tab:red")
            for name, interval, color in (("gt", row["gt_interval"], "black"),
                                          ("pred", row["pred_interval"], "tab:red")):
                if interval:
                    ax.axvspan(interval[0], interval[1], alpha=0.12, color=color)
            ax.set_xlabel("frame")
            ax.set_ylabel("mean marker shift (px)")
            ax.set_title(f"{split}/{row['seq_id']}")
            ax.legend(loc="upper right", fontsize=8)
            fig.tight_layout()
            path = out_dir / f"curve_{split}_{row['seq_id']}.png"
            fig.savefig(path, dpi=110)
            plt.close(fig)
            written.append(path)
    return written
