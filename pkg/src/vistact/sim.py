"""Synthetic paired vision/tactile touch sequences with exact ground truth.

A sequence shows a simple 2D desk scene filmed from above (the "vision"
stream) while a soft marker-carrying touch pad presses somewhere on the
desk (the "tactile" stream). Both streams share the same canvas size and
are aligned frame-by-frame. Every frame carries analytic annotations:
contact center, pressure, and the exact displacement of each membrane
marker, so downstream tracking and timing metrics can be scored against
ground truth instead of human labels.

Coordinate convention: positions are (x, y) in pixel units, x along image
columns and y along rows, with the center of pixel [i, j] at (x=j, y=i).
Images are float arrays in [0, 1], shape (H, W, 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError

MIN_CANVAS = 32


# ---------------------------------------------------------------------------
# scene description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeSpec:
    """One primitive object on the desk."""

    kind: str                      # "disk" | "rect" | "ridge"
    center: tuple[float, float]    # (x, y) px
    size: tuple[float, float]      # disk: (radius, radius); rect/ridge: half extents
    angle: float                   # rotation in radians (used by ridge)
    height: float                  # peak height of the profile, arbitrary units
    albedo: float                  # grayscale reflectance in [0, 1]


@dataclass(frozen=True)
class SceneSpec:
    canvas_size: tuple[int, int]   # (H, W)
    objects: tuple[ShapeSpec, ...]
    desk_albedo: float
    rng_seed: int


@dataclass(frozen=True)
class SceneConfig:
    """Sampling ranges for random scene generation."""

    canvas_size: tuple[int, int] = (128, 128)
    object_count: tuple[int, int] = (4, 10)
    kinds: tuple[str, ...] = ("disk", "rect", "ridge")
    size_range: tuple[float, float] = (6.0, 18.0)
    height_range: tuple[float, float] = (0.3, 1.0)
    # floors keep every scene surface clearly brighter than the arm sprite
    albedo_range: tuple[float, float] = (0.35, 0.9)
    desk_albedo_range: tuple[float, float] = (0.5, 0.75)


def make_scene(config: SceneConfig, seed: int) -> SceneSpec:
    """Sample a random desk scene. Deterministic for a fixed (config, seed)."""
    h, w = config.canvas_size
    if h < MIN_CANVAS or w < MIN_CANVAS:
        raise ConfigError(f"canvas {h}x{w} too small, minimum is {MIN_CANVAS}x{MIN_CANVAS}")
    lo, hi = config.object_count
    if not (1 <= lo <= hi <= 10):
        raise ConfigError(f"object count range {config.object_count} outside [1, 10]")

    rng = np.random.default_rng(seed)
    desk_albedo = float(rng.uniform(*config.desk_albedo_range))
    n_objects = int(rng.integers(lo, hi + 1))
    objects = []
    for _ in range(n_objects):
        kind = str(rng.choice(config.kinds))
        base = float(rng.uniform(*config.size_range))
        if kind == "disk":
            size = (base, base)
        elif kind == "rect":
            size = (base, float(rng.uniform(*config.size_range)))
        else:  # ridge: elongated and thin
            size = (base * 1.6, max(2.0, base * 0.25))
        angle = float(rng.uniform(0.0, math.pi)) if kind == "ridge" else 0.0
        # keep the whole footprint inside the canvas
        margin = math.hypot(*size) + 1.0
        if 2 * margin >= min(h, w):
            margin = min(h, w) / 2.0 - 1.0
        cx = float(rng.uniform(margin, w - margin))
        cy = float(rng.uniform(margin, h - margin))
        objects.append(ShapeSpec(
            kind=kind,
            center=(cx, cy),
            size=size,
            angle=angle,
            height=float(rng.uniform(*config.height_range)),
            albedo=float(rng.uniform(*config.albedo_range)),
        ))
    return SceneSpec(canvas_size=(h, w), objects=tuple(objects),
                     desk_albedo=desk_albedo, rng_seed=seed)


def _shape_fields(shape: ShapeSpec, xs: np.ndarray, ys: np.ndarray):
    """Anti-aliased coverage in [0,1] and a height profile for one shape."""
    cx, cy = shape.center
    dx, dy = xs - cx, ys - cy
    if shape.kind == "disk":
        r = shape.size[0]
        d = np.hypot(dx, dy)
        cov = np.clip(r - d + 0.5, 0.0, 1.0)
        dome = np.sqrt(np.clip(1.0 - (d / r) ** 2, 0.0, None))
        return cov, shape.height * dome
    # rect and ridge share the rotated-box distance
    ca, sa = math.cos(-shape.angle), math.sin(-shape.angle)
    u = dx * ca - dy * sa
    v = dx * sa + dy * ca
    ax, ay = shape.size
    inside_u = ax - np.abs(u)
    inside_v = ay - np.abs(v)
    cov = np.clip(np.minimum(inside_u, inside_v) + 0.5, 0.0, 1.0)
    if shape.kind == "rect":
        profile = shape.height * np.clip(cov, 0.0, 1.0)
    else:  # triangular cross-section along the thin axis
        profile = shape.height * np.clip(1.0 - np.abs(v) / ay, 0.0, None) * (cov > 0)
    return cov, profile


def scene_maps(scene: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Composite albedo and height maps, later objects drawn on top."""
    h, w = scene.canvas_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    albedo = np.full((h, w), scene.desk_albedo)
    height = np.zeros((h, w))
    for shape in scene.objects:
        cov, profile = _shape_fields(shape, xs, ys)
        albedo = albedo * (1.0 - cov) + shape.albedo * cov
        height = np.where(cov > 0.5, profile, height)
    return albedo, height


# ---------------------------------------------------------------------------
# touch scripting and per-frame annotation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TouchScript:
    """One press action: approach, press with a pressure bump, release."""

    target: tuple[float, float]
    approach_frames: int = 19
    press_frames: int = 26
    release_frames: int = 19
    peak_pressure: float = 0.8

    def __post_init__(self):
        if self.approach_frames < 1:
            raise ConfigError("approach_frames must be >= 1 (frame 0 is contact-free)")
        if self.press_frames < 0 or self.release_frames < 0:
            raise ConfigError("frame counts must be nonnegative")
        if self.total_frames < 9:
            raise ConfigError(f"sequence of {self.total_frames} frames cannot host a temporal window")
        if not (0.0 < self.peak_pressure <= 1.0):
            raise ConfigError(f"peak_pressure {self.peak_pressure} outside (0, 1]")

    @property
    def total_frames(self) -> int:
        return self.approach_frames + self.press_frames + self.release_frames

    def pressure_curve(self) -> np.ndarray:
        """Zero during approach/release, trapezoidal bump during press.

        Every press frame has strictly positive pressure and the bump
        reaches peak_pressure on its plateau.
        """
        t = self.total_frames
        curve = np.zeros(t)
        n = self.press_frames
        if n > 0:
            ramp = max(1, n // 4)
            i = np.arange(n)
            bump = np.minimum(1.0, np.minimum((i + 1) / ramp, (n - i) / ramp))
            curve[self.approach_frames:self.approach_frames + n] = self.peak_pressure * bump
        return curve


@dataclass(frozen=True)
class GridSpec:
    """Nominal marker layout baked into the tactile membrane."""

    rows: int
    cols: int
    positions: np.ndarray  # (rows*cols, 2) of (x, y)

    @property
    def count(self) -> int:
        return self.rows * self.cols

    @property
    def spacing(self) -> float:
        dx = self.positions[1, 0] - self.positions[0, 0] if self.cols > 1 else np.inf
        dy = self.positions[self.cols, 1] - self.positions[0, 1] if self.rows > 1 else np.inf
        return float(min(dx, dy))


def marker_grid(canvas_size: tuple[int, int], rows: int, cols: int) -> GridSpec:
    h, w = canvas_size
    xs = (np.arange(cols) + 1.0) * w / (cols + 1.0)
    ys = (np.arange(rows) + 1.0) * h / (rows + 1.0)
    gx, gy = np.meshgrid(xs, ys)
    return GridSpec(rows=rows, cols=cols,
                    positions=np.stack([gx.ravel(), gy.ravel()], axis=1))


@dataclass(frozen=True)
class TactileParams:
    """Geometry and optics of the synthetic touch pad."""

    canvas_size: tuple[int, int] = (128, 128)
    marker_rows: int = 11
    marker_cols: int = 11
    marker_radius: Optional[float] = None   # None: 0.16 * grid spacing
    marker_level: float = 0.06              # luminance of a marker core
    marker_gain: float = 1.6                # dot opacity scale (core saturates)
    base_color: tuple[float, float, float] = (0.45, 0.50, 0.55)
    shade_gain: float = 0.8
    light_elevation: float = 1.0471975511965976   # 60 degrees
    light_azimuths: tuple[float, float, float] = (1.5707963267948966,   # 90
                                                  3.6651914291880923,   # 210
                                                  5.759586531581287)    # 330
    indent_depth: float = 8.0
    indent_sigma: float = 10.0
    push_amplitude: float = 4.0   # A: peak marker displacement in px
    push_sigma: float = 10.0      # radial falloff of the push field
    push_eps: float = 1e-6

    def grid(self) -> GridSpec:
        return marker_grid(self.canvas_size, self.marker_rows, self.marker_cols)

    def dot_radius(self, grid: GridSpec) -> float:
        if self.marker_radius is not None:
            return self.marker_radius
        return 0.16 * grid.spacing

    def light_dirs(self) -> np.ndarray:
        el = self.light_elevation
        dirs = [(math.cos(az) * math.cos(el), math.sin(az) * math.cos(el), math.sin(el))
                for az in self.light_azimuths]
        return np.asarray(dirs)


@dataclass(frozen=True)
class FrameState:
    """Ground truth for a single tactile frame."""

    center: tuple[float, float]
    pressure: float
    in_contact: bool
    marker_displacements: np.ndarray  # (M, 2)


@dataclass(frozen=True)
class ContactAnnotation:
    """Per-frame ground truth for a whole sequence."""

    centers: np.ndarray               # (T, 2)
    pressures: np.ndarray             # (T,)
    in_contact: np.ndarray            # (T,) bool
    marker_displacements: np.ndarray  # (T, M, 2)
    t_on: Optional[int]
    t_off: Optional[int]
    grid: GridSpec

    @property
    def num_frames(self) -> int:
        return len(self.pressures)

    def frame(self, t: int) -> FrameState:
        return FrameState(center=tuple(self.centers[t]),
                          pressure=float(self.pressures[t]),
                          in_contact=bool(self.in_contact[t]),
                          marker_displacements=self.marker_displacements[t])


def marker_displacement(marker_pos: np.ndarray, center, pressure: float,
                        params: TactileParams) -> np.ndarray:
    """Radial outward push of membrane markers under a centered press.

    d = pressure * A * exp(-|m-c|^2 / (2 sigma^2)) * (m-c) / (|m-c| + eps)

    Total function: pressure 0 or a marker at the center map to (0, 0).
    Accepts a single (2,) position or an (M, 2) stack.
    """
    if pressure < 0:
        raise ConfigError(f"pressure must be nonnegative, got {pressure}")
    m = np.asarray(marker_pos, dtype=np.float64)
    single = m.ndim == 1
    m = np.atleast_2d(m)
    delta = m - np.asarray(center, dtype=np.float64)
    dist = np.hypot(delta[:, 0], delta[:, 1])
    mag = pressure * params.push_amplitude * np.exp(-dist ** 2 / (2.0 * params.push_sigma ** 2))
    disp = mag[:, None] * delta / (dist[:, None] + params.push_eps)
    return disp[0] if single else disp


def annotate_script(script: TouchScript, params: TactileParams) -> ContactAnnotation:
    """Exact per-frame annotation for a touch script."""
    grid = params.grid()
    pressures = script.pressure_curve()
    t_total = script.total_frames
    centers = np.tile(np.asarray(script.target, dtype=np.float64), (t_total, 1))
    in_contact = pressures > 0
    disp = np.zeros((t_total, grid.count, 2))
    for t in np.nonzero(in_contact)[0]:
        disp[t] = marker_displacement(grid.positions, script.target,
                                      float(pressures[t]), params)
    contact_idx = np.nonzero(in_contact)[0]
    t_on = int(contact_idx[0]) if len(contact_idx) else None
    t_off = int(contact_idx[-1]) if len(contact_idx) else None
    return ContactAnnotation(centers=centers, pressures=pressures,
                             in_contact=in_contact, marker_displacements=disp,
                             t_on=t_on, t_off=t_off, grid=grid)


# ---------------------------------------------------------------------------
# tactile rendering
# ---------------------------------------------------------------------------

def render_tactile(frame: FrameState, params: TactileParams) -> np.ndarray:
    """Shade the deformed membrane and stamp the displaced marker dots.

    At pressure 0 the height field is flat and the output is, bit for bit,
    the tactile reference image.
    """
    h, w = params.canvas_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    grid = params.grid()

    # indentation height field and its analytic gradient
    cx, cy = frame.center
    sig = params.indent_sigma
    r2 = (xs - cx) ** 2 + (ys - cy) ** 2
    hfield = frame.pressure * params.indent_depth * np.exp(-r2 / (2.0 * sig ** 2))
    gx = -(xs - cx) / sig ** 2 * hfield
    gy = -(ys - cy) / sig ** 2 * hfield

    # unit surface normals of the membrane
    norm = np.sqrt(gx ** 2 + gy ** 2 + 1.0)
    nx, ny, nz = -gx / norm, -gy / norm, 1.0 / norm

    # one directional light per channel; a flat membrane shades to base_color
    lights = params.light_dirs()
    image = np.empty((h, w, 3))
    for c in range(3):
        lx, ly, lz = lights[c]
        lambert = nx * lx + ny * ly + nz * lz
        image[:, :, c] = params.base_color[c] + params.shade_gain * (lambert - lz)

    # displaced marker dots: smooth gaussian profile, saturating dark core
    positions = grid.positions + frame.marker_displacements
    dot_r = params.dot_radius(grid)
    reach = 4.0 * dot_r
    alpha = np.zeros((h, w))
    for px, py in positions:
        x0, x1 = max(0, int(px - reach)), min(w, int(px + reach) + 2)
        y0, y1 = max(0, int(py - reach)), min(h, int(py + reach) + 2)
        if x0 >= x1 or y0 >= y1:
            continue
        d2 = (xs[y0:y1, x0:x1] - px) ** 2 + (ys[y0:y1, x0:x1] - py) ** 2
        alpha[y0:y1, x0:x1] += np.exp(-d2 / (2.0 * dot_r ** 2))
    alpha = np.minimum(1.0, params.marker_gain * alpha)

    image = image * (1.0 - alpha[:, :, None]) + params.marker_level * alpha[:, :, None]
    return np.clip(image, 0.0, 1.0)


def tactile_reference(params: TactileParams) -> np.ndarray:
    """Membrane at rest: flat shading plus the undisplaced marker grid."""
    grid = params.grid()
    rest = FrameState(center=(0.0, 0.0), pressure=0.0, in_contact=False,
                      marker_displacements=np.zeros((grid.count, 2)))
    return render_tactile(rest, params)


# ---------------------------------------------------------------------------
# vision rendering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArmState:
    tip: tuple[float, float]
    visible: bool


@dataclass(frozen=True)
class VisionParams:
    """Scene shading and arm sprite proportions (fractions of canvas)."""

    emboss_gain: float = 0.25
    arm_width_frac: float = 0.09
    arm_length_frac: float = 0.30
    arm_tip_frac: float = 0.07
    arm_body_color: tuple[float, float, float] = (0.12, 0.12, 0.15)
    arm_tip_color: tuple[float, float, float] = (0.90, 0.45, 0.10)
    approach_dist_frac: float = 0.45

    def arm_geometry(self, canvas_size: tuple[int, int]) -> tuple[float, float, float]:
        h, w = canvas_size
        return (self.arm_width_frac * w, self.arm_length_frac * h, self.arm_tip_frac * h)

    def arm_diagonal(self, canvas_size: tuple[int, int]) -> float:
        width, length, tip = self.arm_geometry(canvas_size)
        return math.hypot(width, length + tip)


def _scene_base(scene: SceneSpec, params: VisionParams) -> np.ndarray:
    """Albedo map with a gentle emboss so objects read as raised."""
    albedo, height = scene_maps(scene)
    gy, gx = np.gradient(height)
    shade = 1.0 + params.emboss_gain * (0.7 * gx - 0.7 * gy)
    gray = np.clip(albedo * shade, 0.0, 1.0)
    return np.repeat(gray[:, :, None], 3, axis=2)


def arm_coverage(tip: tuple[float, float], canvas_size: tuple[int, int],
                 params: VisionParams) -> tuple[np.ndarray, np.ndarray]:
    """Anti-aliased coverage of the shaft rectangle and the tip triangle."""
    h, w = canvas_size
    width, length, tip_h = params.arm_geometry((h, w))
    tx, ty = tip
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    half = width / 2.0
    # shaft from (ty - tip_h - length) down to (ty - tip_h)
    in_x = np.clip(half - np.abs(xs - tx) + 0.5, 0.0, 1.0)
    top, bottom = ty - tip_h - length, ty - tip_h
    in_y = np.clip(np.minimum(ys - top, bottom - ys) + 0.5, 0.0, 1.0)
    shaft = in_x * in_y

    # triangle: apex at the tip, base of width `width` at the shaft bottom
    rel = (ty - ys) / max(tip_h, 1e-9)          # 0 at tip row, 1 at base row
    tri_half = half * np.clip(rel, 0.0, 1.0)
    tri = (np.clip(tri_half - np.abs(xs - tx) + 0.5, 0.0, 1.0)
           * np.clip(np.minimum(ys - (ty - tip_h), ty - ys) + 0.5, 0.0, 1.0))
    return shaft, tri


def expected_arm_centroid(tip: tuple[float, float], canvas_size: tuple[int, int],
                          params: VisionParams) -> tuple[float, float]:
    """Centroid of the sprite footprint at `tip`, clipped to the canvas."""
    shaft, tri = arm_coverage(tip, canvas_size, params)
    cov = np.clip(shaft + tri, 0.0, 1.0)
    total = cov.sum()
    if total <= 0:
        return tip
    h, w = canvas_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return (float((xs * cov).sum() / total), float((ys * cov).sum() / total))


def compose_arm(image: np.ndarray, arm: ArmState, params: VisionParams) -> np.ndarray:
    """Paint the arm sprite (shaft rectangle plus tip triangle) over a frame."""
    if not arm.visible:
        return image
    shaft, tri = arm_coverage(arm.tip, image.shape[:2], params)
    out = image.copy()
    for cov, color in ((shaft, params.arm_body_color), (tri, params.arm_tip_color)):
        out = out * (1.0 - cov[:, :, None]) + np.asarray(color) * cov[:, :, None]
    return np.clip(out, 0.0, 1.0)


def render_vision(scene: SceneSpec, arm: Optional[ArmState],
                  params: VisionParams | None = None,
                  base: Optional[np.ndarray] = None) -> np.ndarray:
    """Top-down view of the scene; `arm=None` reproduces the vision reference.

    `base` lets callers reuse the composited scene across frames.
    """
    params = params or VisionParams()
    if base is None:
        base = _scene_base(scene, params)
    if arm is None or not arm.visible:
        return base.copy()
    return compose_arm(base, arm, params)


def arm_trajectory(script: TouchScript, canvas_size: tuple[int, int],
                   params: VisionParams) -> list[ArmState]:
    """Tip descends to the target, holds during press, retracts on release.

    Frame 0 keeps the arm hidden so the first frame matches the reference.
    """
    h, _ = canvas_size
    tx, ty = script.target
    dist = params.approach_dist_frac * h
    states: list[ArmState] = []
    a, p, r = script.approach_frames, script.press_frames, script.release_frames
    for t in range(a):
        u = t / a
        states.append(ArmState(tip=(tx, ty - (1.0 - u) * dist), visible=t > 0))
    for _ in range(p):
        states.append(ArmState(tip=(tx, ty), visible=True))
    for t in range(r):
        v = (t + 1) / r
        states.append(ArmState(tip=(tx, ty - v * dist), visible=True))
    return states


# ---------------------------------------------------------------------------
# full sequence synthesis
# ---------------------------------------------------------------------------

@dataclass
class TouchSequence:
    """Synchronized vision/tactile streams plus references and ground truth."""

    scene: SceneSpec
    script: TouchScript
    vision: np.ndarray        # (T, H, W, 3)
    touch: np.ndarray         # (T, H, W, 3)
    ref_vision: np.ndarray    # (H, W, 3)
    ref_touch: np.ndarray     # (H, W, 3)
    annotation: ContactAnnotation
    seq_id: str = ""

    @property
    def num_frames(self) -> int:
        return self.vision.shape[0]


def synthesize_sequence(scene: SceneSpec, script: TouchScript,
                        tactile_params: Optional[TactileParams] = None,
                        vision_params: Optional[VisionParams] = None,
                        seq_id: str = "") -> TouchSequence:
    """Render a touch action on a scene into aligned vision/tactile streams."""
    h, w = scene.canvas_size
    tx, ty = script.target
    if not (0 <= tx < w and 0 <= ty < h):
        raise ConfigError(f"touch target {script.target} outside canvas {scene.canvas_size}")
    tactile_params = tactile_params or TactileParams(canvas_size=scene.canvas_size)
    if tactile_params.canvas_size != scene.canvas_size:
        tactile_params = replace(tactile_params, canvas_size=scene.canvas_size)
    vision_params = vision_params or VisionParams()

    annotation = annotate_script(script, tactile_params)
    base = _scene_base(scene, vision_params)
    arms = arm_trajectory(script, scene.canvas_size, vision_params)

    t_total = script.total_frames
    vision = np.empty((t_total, h, w, 3), dtype=np.float64)
    touch = np.empty((t_total, h, w, 3), dtype=np.float64)
    for t in range(t_total):
        vision[t] = render_vision(scene, arms[t], vision_params, base=base)
        touch[t] = render_tactile(annotation.frame(t), tactile_params)

    ref_vision = render_vision(scene, None, vision_params, base=base)
    ref_touch = tactile_reference(tactile_params)
    return TouchSequence(scene=scene, script=script, vision=vision, touch=touch,
                         ref_vision=ref_vision, ref_touch=ref_touch,
                         annotation=annotation, seq_id=seq_id)


def sample_touch_target(scene: SceneSpec, rng: np.random.Generator,
                        desk_prob: float = 0.6, inset: int = 12) -> tuple[float, float]:
    """Pick a touch point: bare desk with probability `desk_prob`, else an object.

    Touch-pad data is naturally dominated by flat presses; the desk bias
    keeps that imbalance in the synthetic corpus.
    """
    h, w = scene.canvas_size
    _, height = scene_maps(scene)
    region = height[inset:h - inset, inset:w - inset]
    on_desk = rng.uniform() < desk_prob
    mask = (region <= 0) if on_desk else (region > 0)
    flat = np.nonzero(mask.ravel())[0]
    if len(flat) == 0:  # degenerate scene: fall back to the other region
        flat = np.nonzero((~mask).ravel())[0]
    pick = int(rng.choice(flat))
    iy, ix = divmod(pick, region.shape[1])
    return (float(ix + inset), float(iy + inset))
