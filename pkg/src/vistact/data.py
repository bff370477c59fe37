"""Dataset indexing, rarity-weighted sampling, windows, and augmentation.

Most frames of a touch corpus show a resting membrane, which starves a
conditional generator of interesting targets. Each frame therefore gets a
rarity weight (variance of the Laplacian of its tactile residual against
the reference) and training draws frames proportionally to those weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import convolve2d

from .errors import ConfigError
from .storage import LoadedSequence, load_split

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
LAPLACIAN = np.array([[0.0, 1.0, 0.0],
                      [1.0, -4.0, 1.0],
                      [0.0, 1.0, 0.0]])
RARITY_FLOOR = 1e-6
WINDOW_OFFSETS = (-4, -2, 0, 2, 4)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion, 0.299 R + 0.587 G + 0.114 B."""
    if rgb.ndim < 3 or rgb.shape[-1] != 3:
        raise ConfigError(f"expected trailing RGB axis, got shape {rgb.shape}")
    return rgb @ LUMA_WEIGHTS


def rarity_score(frame: np.ndarray, reference: np.ndarray,
                 floor: float = RARITY_FLOOR) -> float:
    """Variance of the Laplacian of |frame - reference|, floored at `floor`.

    The Laplacian kills constant and smoothly varying residuals (exposure
    drift), so the score responds to texture and geometry rather than raw
    intensity change. Convolution is restricted to the valid region to
    avoid border effects.
    """
    if frame.shape != reference.shape:
        raise ConfigError(f"frame {frame.shape} vs reference {reference.shape}")
    if frame.ndim != 2:
        raise ConfigError("rarity_score expects single-channel images")
    residual = np.abs(np.asarray(frame, dtype=np.float64) - reference)
    if min(residual.shape) < 3:
        return floor
    response = convolve2d(residual, LAPLACIAN, mode="valid")
    return max(float(np.var(response)), floor)


class CategoricalSampler:
    """Draws indices with probability proportional to the given weights."""

    def __init__(self, probabilities: np.ndarray):
        self.probabilities = probabilities

    def __len__(self) -> int:
        return len(self.probabilities)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(len(self.probabilities), size=size, replace=True,
                          p=self.probabilities)


def build_sampler(weights: Sequence[float]) -> CategoricalSampler:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0:
        raise ConfigError("weights must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ConfigError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ConfigError("cannot normalize all-zero weights")
    return CategoricalSampler(w / total)


def temporal_window(seq_len: int, t: int) -> list[int]:
    """Frame indices {t-4, t-2, t, t+2, t+4}, clamped into [0, seq_len)."""
    if not (0 <= t < seq_len):
        raise ConfigError(f"frame {t} outside sequence of length {seq_len}")
    return [min(max(t + off, 0), seq_len - 1) for off in WINDOW_OFFSETS]


# ---------------------------------------------------------------------------
# training samples
# ---------------------------------------------------------------------------

@dataclass
class TrainingSample:
    """One training pair: grayscale input window, RGB references, RGB target."""

    inputs: np.ndarray        # (5, H, W) grayscale in [0, 1]
    ref_vision: np.ndarray    # (H, W, 3)
    ref_touch: np.ndarray     # (H, W, 3)
    target: np.ndarray        # (H, W, 3)
    weight: float
    direction: str = "v2t"
    seq_id: str = ""
    frame: int = 0


@dataclass
class DatasetIndex:
    """Flat (sequence, frame) index over a split with per-frame rarity weights."""

    sequences: dict[str, LoadedSequence]
    entries: list[tuple[str, int]]
    weights: np.ndarray
    direction: str            # "v2t" | "t2v"

    def __len__(self) -> int:
        return len(self.entries)

    def contact_flags(self) -> np.ndarray:
        return np.array([bool(self.sequences[sid].annotation.in_contact[t])
                         for sid, t in self.entries])


def build_index(root: Path, split: str, direction: str = "v2t",
                limit: Optional[int] = None) -> DatasetIndex:
    """Load a split into memory and compute tactile rarity per frame.

    Rarity always comes from the tactile side: membrane flatness is what
    makes a frame common, in either prediction direction.
    """
    if direction not in ("v2t", "t2v"):
        raise ConfigError(f"direction must be v2t or t2v, got {direction!r}")
    sequences = {seq.seq_id: seq for seq in load_split(root, split, limit=limit)}
    entries: list[tuple[str, int]] = []
    weights: list[float] = []
    for sid in sorted(sequences):
        seq = sequences[sid]
        ref_gray = to_grayscale(seq.ref_touch)
        for t in range(seq.num_frames):
            entries.append((sid, t))
            weights.append(rarity_score(to_grayscale(seq.touch[t]), ref_gray))
    return DatasetIndex(sequences=sequences, entries=entries,
                        weights=np.asarray(weights), direction=direction)


def make_training_sample(index: DatasetIndex, entry: int,
                         temporal: bool = True) -> TrainingSample:
    """Assemble the full-resolution sample for one index entry.

    With `temporal=False` the window collapses to the current frame
    repeated, which keeps the model input shape unchanged.
    """
    sid, t = index.entries[entry]
    seq = index.sequences[sid]
    if index.direction == "v2t":
        in_frames, out_frames = seq.vision, seq.touch
    else:
        in_frames, out_frames = seq.touch, seq.vision
    idx = temporal_window(seq.num_frames, t) if temporal else [t] * 5
    inputs = np.stack([to_grayscale(in_frames[i]) for i in idx])
    return TrainingSample(inputs=inputs.astype(np.float32),
                          ref_vision=seq.ref_vision,
                          ref_touch=seq.ref_touch,
                          target=out_frames[t],
                          weight=float(index.weights[entry]),
                          direction=index.direction,
                          seq_id=sid, frame=t)


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentParams:
    """Crop plus mild photometric jitter; zero amplitudes mean identity."""

    crop_size: Optional[int] = None
    brightness: float = 0.1
    contrast: float = 0.1
    saturation: float = 0.1
    hue: float = 0.05


def _jitter_rgb(image: np.ndarray, brightness: float, contrast: float,
                saturation: float, hue: float) -> np.ndarray:
    out = image
    if brightness != 1.0:
        out = out * brightness
    if contrast != 1.0:
        mean = out.mean()
        out = (out - mean) * contrast + mean
    if saturation != 1.0:
        luma = to_grayscale(np.clip(out, 0.0, 1.0))[..., None]
        out = luma + (out - luma) * saturation
    if hue != 0.0:
        from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
        hsv = rgb_to_hsv(np.clip(out, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + hue) % 1.0
        out = hsv_to_rgb(hsv)
    return np.clip(out, 0.0, 1.0) if out is not image else image


def _jitter_gray(image: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    out = image
    if brightness != 1.0:
        out = out * brightness
    if contrast != 1.0:
        mean = out.mean()
        out = (out - mean) * contrast + mean
    return np.clip(out, 0.0, 1.0) if out is not image else image


def augment(sample: TrainingSample, seed: int,
            params: AugmentParams = AugmentParams()) -> TrainingSample:
    """Crop and jitter a sample consistently.

    One crop offset is shared by every image in the sample so input and
    target stay aligned. Photometric factors are drawn once per modality:
    the input window and the input-side reference share one draw, the
    target and its reference share the other.
    """
    rng = np.random.default_rng(seed)
    h, w = sample.target.shape[:2]
    crop = params.crop_size if params.crop_size is not None else h
    if crop > h or crop > w:
        raise ConfigError(f"crop {crop} exceeds image size {h}x{w}")
    oy = int(rng.integers(0, h - crop + 1))
    ox = int(rng.integers(0, w - crop + 1))

    def draw_jitter():
        b = float(rng.uniform(1.0 - params.brightness, 1.0 + params.brightness))
        c = float(rng.uniform(1.0 - params.contrast, 1.0 + params.contrast))
        s = float(rng.uniform(1.0 - params.saturation, 1.0 + params.saturation))
        hshift = float(rng.uniform(-params.hue, params.hue))
        return b, c, s, hshift

    jit_vision = draw_jitter()
    jit_touch = draw_jitter()
    jit_in = jit_vision if sample.direction == "v2t" else jit_touch
    jit_out = jit_touch if sample.direction == "v2t" else jit_vision

    def cut(img: np.ndarray) -> np.ndarray:
        if img.ndim == 3 and img.shape[-1] == 3:    # (H, W, 3)
            return img[oy:oy + crop, ox:ox + crop, :]
        return img[..., oy:oy + crop, ox:ox + crop]  # (5, H, W)

    inputs = _jitter_gray(cut(sample.inputs), jit_in[0], jit_in[1])
    target = _jitter_rgb(cut(sample.target), *jit_out)
    ref_vision = _jitter_rgb(cut(sample.ref_vision), *jit_vision)
    ref_touch = _jitter_rgb(cut(sample.ref_touch), *jit_touch)

    return replace(sample, inputs=inputs.astype(np.float32), target=target,
                   ref_vision=ref_vision, ref_touch=ref_touch)
