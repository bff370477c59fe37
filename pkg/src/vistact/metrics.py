"""Objective metrics: marker tracking, contact timing, and touch location.

The membrane markers are tracked as dark blobs and matched one-to-one to
their nominal grid positions. Their mean displacement over time forms a
deformation curve; thresholding that curve at a fixed fraction of its
range recovers the interval during which the pad was in contact, which is
compared against the same quantity extracted from a reference signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .data import to_grayscale
from .errors import ConfigError
from .sim import GridSpec, VisionParams, expected_arm_centroid

DEFAULT_CONTACT_RATIO = 0.6
DEFAULT_RESIDUAL_THRESHOLD = 0.1
MIN_BLOB_AREA = 2


# ---------------------------------------------------------------------------
# marker tracking
# ---------------------------------------------------------------------------

@dataclass
class MarkerTrack:
    positions: np.ndarray   # (M, 2) of (x, y)
    confident: bool


def _detection_threshold(reference: np.ndarray) -> float:
    """Split marker darkness from membrane shading on the reference frame.

    Markers cover a few percent of the pad, so the 2nd percentile sits on
    dot cores and the median on the membrane. The cut sits 40% of the way
    up, below the darkest shading a hard press produces.
    """
    lum = to_grayscale(reference) if reference.ndim == 3 else reference
    dark = np.percentile(lum, 2)
    mid = np.percentile(lum, 50)
    return float(dark + 0.4 * (mid - dark))


def track_markers(frame: np.ndarray, reference: np.ndarray, grid: GridSpec,
                  threshold: Optional[float] = None) -> MarkerTrack:
    """Locate each membrane marker in a frame.

    Dark blobs are extracted by thresholding, localized by darkness-weighted
    centroids, and greedily matched to the nominal grid (closest pair
    first, one-to-one). Markers without a matched blob keep their nominal
    position. A frame with no blobs at all is flagged unconfident.
    """
    if frame.shape != reference.shape:
        raise ConfigError(f"frame {frame.shape} vs reference {reference.shape}")
    thr = threshold if threshold is not None else _detection_threshold(reference)
    lum = to_grayscale(frame) if frame.ndim == 3 else frame
    mask = lum < thr
    labels, count = ndimage.label(mask)
    positions = grid.positions.copy()
    if count == 0:
        return MarkerTrack(positions=positions, confident=False)

    centroids = []
    darkness = np.where(mask, thr - lum, 0.0)
    for comp in ndimage.find_objects(labels):
        sub = labels[comp]
        idx = np.nonzero(sub > 0)
        if len(idx[0]) < MIN_BLOB_AREA:
            continue
        w = darkness[comp][idx]
        total = w.sum()
        if total <= 0:
            continue
        ys = idx[0] + comp[0].start
        xs = idx[1] + comp[1].start
        centroids.append(((xs * w).sum() / total, (ys * w).sum() / total))
    if not centroids:
        return MarkerTrack(positions=positions, confident=False)

    blobs = np.asarray(centroids)
    dist = np.linalg.norm(grid.positions[:, None, :] - blobs[None, :, :], axis=2)
    free_markers = set(range(grid.count))
    free_blobs = set(range(len(blobs)))
    order = np.dstack(np.unravel_index(np.argsort(dist, axis=None), dist.shape))[0]
    for mi, bi in order:
        if mi in free_markers and bi in free_blobs:
            positions[mi] = blobs[bi]
            free_markers.discard(int(mi))
            free_blobs.discard(int(bi))
            if not free_markers or not free_blobs:
                break
    return MarkerTrack(positions=positions, confident=True)


# ---------------------------------------------------------------------------
# deformation over time
# ---------------------------------------------------------------------------

@dataclass
class DeformationCurve:
    values: np.ndarray   # (T,) mean marker displacement in px

    @property
    def d_min(self) -> float:
        return float(self.values.min())

    @property
    def d_max(self) -> float:
        return float(self.values.max())


def deformation_curve(frames: np.ndarray, reference: np.ndarray,
                      grid: GridSpec) -> DeformationCurve:
    """Per-frame mean L2 marker displacement relative to the rest frame."""
    rest = track_markers(reference, reference, grid).positions
    values = np.empty(len(frames))
    for t, frame in enumerate(frames):
        tracked = track_markers(frame, reference, grid).positions
        values[t] = np.linalg.norm(tracked - rest, axis=1).mean()
    return DeformationCurve(values=values)


@dataclass(frozen=True)
class ContactInterval:
    t_l: int
    t_r: int


def moment_of_contact(curve: DeformationCurve | np.ndarray,
                      ratio: float = DEFAULT_CONTACT_RATIO,
                      flat_tol: float = 0.0) -> Optional[ContactInterval]:
    """First/last frame where the curve reaches ratio * (max - min) + min.

    Returns None when the curve is flat (range <= flat_tol): a flat curve
    has no contact event to localize.
    """
    values = curve.values if isinstance(curve, DeformationCurve) else np.asarray(curve, float)
    if len(values) == 0:
        raise ConfigError("empty deformation curve")
    if not (0.0 < ratio < 1.0):
        raise ConfigError(f"cutoff ratio {ratio} outside (0, 1)")
    d_min, d_max = float(values.min()), float(values.max())
    if d_max - d_min <= flat_tol:
        return None
    theta = ratio * (d_max - d_min) + d_min
    above = np.nonzero(values >= theta)[0]
    return ContactInterval(t_l=int(above[0]), t_r=int(above[-1]))


def contact_error(pred: ContactInterval, gt: ContactInterval) -> int:
    """|t_l - t_l^gt| + |t_r - t_r^gt| in frames."""
    return abs(pred.t_l - gt.t_l) + abs(pred.t_r - gt.t_r)


def analytic_deformation_curve(marker_displacements: np.ndarray) -> DeformationCurve:
    """Ground-truth curve straight from annotated displacement fields."""
    values = np.linalg.norm(marker_displacements, axis=2).mean(axis=1)
    return DeformationCurve(values=values)


def marker_deformation_error(pred_frames: np.ndarray, gt_frames: np.ndarray,
                             reference: np.ndarray, grid: GridSpec) -> float:
    """Mean L2 distance between corresponding tracked markers, over all frames."""
    if len(pred_frames) != len(gt_frames):
        raise ConfigError(f"sequence lengths differ: {len(pred_frames)} vs {len(gt_frames)}")
    total = 0.0
    for pred, gt in zip(pred_frames, gt_frames):
        p = track_markers(pred, reference, grid).positions
        g = track_markers(gt, reference, grid).positions
        total += np.linalg.norm(p - g, axis=1).mean()
    return total / len(pred_frames)


# ---------------------------------------------------------------------------
# touch localization in predicted vision frames
# ---------------------------------------------------------------------------

def touch_location_error(pred_vision: np.ndarray, vision_reference: np.ndarray,
                         gt_center, threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
                         vision_params: Optional[VisionParams] = None
                         ) -> Optional[float]:
    """Distance between the hallucinated arm and the true touch point.

    The arm shows up as the largest connected region where the prediction
    departs from the reference scene. Its centroid is compared against the
    centroid the real sprite would leave when touching `gt_center` (canvas
    clipping included), so an arm drawn exactly at the annotated point
    scores near zero. Returns None (a miss) when nothing in the prediction
    clears the residual threshold.
    """
    if pred_vision.shape != vision_reference.shape:
        raise ConfigError(f"prediction {pred_vision.shape} vs reference {vision_reference.shape}")
    residual = np.abs(pred_vision.astype(np.float64) - vision_reference).mean(axis=2)
    mask = residual > threshold
    if not mask.any():
        return None
    labels, count = ndimage.label(mask)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    largest = int(np.argmax(sizes)) + 1
    ys, xs = np.nonzero(labels == largest)
    ex, ey = expected_arm_centroid(gt_center, pred_vision.shape[:2],
                                   vision_params or VisionParams())
    return float(np.hypot(xs.mean() - ex, ys.mean() - ey))
