import math

import numpy as np
import pytest

from vistact import sim
from vistact.errors import ConfigError


# ---------------------------------------------------------------------------
# scene sampling
# ---------------------------------------------------------------------------

def test_make_scene_deterministic():
    cfg = sim.SceneConfig()
    a = sim.make_scene(cfg, seed=7)
    b = sim.make_scene(cfg, seed=7)
    assert a == b


def test_make_scene_object_count_range():
    cfg = sim.SceneConfig(object_count=(4, 10))
    for seed in range(25):
        scene = sim.make_scene(cfg, seed=seed)
        assert 4 <= len(scene.objects) <= 10


def test_make_scene_seeds_differ():
    cfg = sim.SceneConfig()
    assert sim.make_scene(cfg, seed=7) != sim.make_scene(cfg, seed=8)


def test_make_scene_objects_inside_canvas():
    cfg = sim.SceneConfig(canvas_size=(96, 96))
    for seed in range(10):
        scene = sim.make_scene(cfg, seed=seed)
        for obj in scene.objects:
            cx, cy = obj.center
            reach = math.hypot(*obj.size)
            assert 0 <= cx - reach and cx + reach <= 96
            assert 0 <= cy - reach and cy + reach <= 96


def test_make_scene_rejects_tiny_canvas():
    with pytest.raises(ConfigError):
        sim.make_scene(sim.SceneConfig(canvas_size=(31, 128)), seed=0)


def test_make_scene_rejects_bad_count_range():
    with pytest.raises(ConfigError):
        sim.make_scene(sim.SceneConfig(object_count=(0, 5)), seed=0)
    with pytest.raises(ConfigError):
        sim.make_scene(sim.SceneConfig(object_count=(4, 11)), seed=0)


# ---------------------------------------------------------------------------
# touch script and pressure curve
# ---------------------------------------------------------------------------

def test_script_default_is_64_frames():
    script = sim.TouchScript(target=(10.0, 10.0))
    assert script.total_frames == 64


def test_pressure_curve_phases():
    script = sim.TouchScript(target=(10.0, 10.0), approach_frames=5,
                             press_frames=8, release_frames=5, peak_pressure=0.7)
    curve = script.pressure_curve()
    assert np.all(curve[:5] == 0)
    assert np.all(curve[5:13] > 0)
    assert np.all(curve[13:] == 0)
    assert curve.max() == pytest.approx(0.7)


def test_pressure_curve_no_press():
    script = sim.TouchScript(target=(10.0, 10.0), approach_frames=5,
                             press_frames=0, release_frames=5)
    assert np.all(script.pressure_curve() == 0)


def test_script_rejects_short_sequence():
    with pytest.raises(ConfigError):
        sim.TouchScript(target=(1.0, 1.0), approach_frames=2, press_frames=2,
                        release_frames=2)


def test_script_rejects_bad_pressure():
    with pytest.raises(ConfigError):
        sim.TouchScript(target=(1.0, 1.0), peak_pressure=0.0)
    with pytest.raises(ConfigError):
        sim.TouchScript(target=(1.0, 1.0), peak_pressure=1.5)


# ---------------------------------------------------------------------------
# marker displacement field
# ---------------------------------------------------------------------------

def test_marker_displacement_zero_pressure():
    params = sim.TactileParams()
    d = sim.marker_displacement(np.array([30.0, 40.0]), (10.0, 10.0), 0.0, params)
    assert np.array_equal(d, np.zeros(2))


def test_marker_displacement_at_center():
    params = sim.TactileParams()
    d = sim.marker_displacement(np.array([10.0, 10.0]), (10.0, 10.0), 1.0, params)
    assert np.allclose(d, 0.0)


def test_marker_displacement_hand_value():
    # pressure 1, A=4, sigma=10, marker 10 px right of center:
    # magnitude 4 * exp(-100/200), direction (1, 0)
    params = sim.TactileParams(push_amplitude=4.0, push_sigma=10.0)
    d = sim.marker_displacement(np.array([20.0, 10.0]), (10.0, 10.0), 1.0, params)
    expected = 4.0 * math.exp(-0.5)
    assert d[0] == pytest.approx(expected, rel=1e-5)
    assert d[1] == pytest.approx(0.0, abs=1e-9)
    assert expected == pytest.approx(2.426, abs=1e-3)


def test_marker_displacement_monotone_in_pressure():
    params = sim.TactileParams()
    marker = np.array([40.0, 52.0])
    center = (33.0, 47.0)
    mags = [np.linalg.norm(sim.marker_displacement(marker, center, p, params))
            for p in np.linspace(0.0, 1.0, 11)]
    assert all(b >= a for a, b in zip(mags, mags[1:]))


def test_marker_displacement_symmetric_grid_sums_to_zero():
    # a grid centered on the contact pushes out radially; opposite markers cancel
    params = sim.TactileParams()
    center = (50.0, 50.0)
    xs = np.linspace(30.0, 70.0, 5)
    grid = np.array([[x, y] for x in xs for y in xs])
    disp = sim.marker_displacement(grid, center, 0.8, params)
    assert np.allclose(disp.sum(axis=0), 0.0, atol=1e-9)


def test_marker_displacement_rejects_negative_pressure():
    with pytest.raises(ConfigError):
        sim.marker_displacement(np.zeros(2), (0.0, 0.0), -0.1, sim.TactileParams())


# ---------------------------------------------------------------------------
# tactile rendering
# ---------------------------------------------------------------------------

def _frame(center, pressure, params):
    grid = params.grid()
    disp = sim.marker_displacement(grid.positions, center, pressure, params)
    return sim.FrameState(center=center, pressure=pressure,
                          in_contact=pressure > 0, marker_displacements=disp)


def test_render_tactile_zero_pressure_is_reference(desk_tactile_params):
    image = sim.render_tactile(_frame((20.0, 20.0), 0.0, desk_tactile_params),
                               desk_tactile_params)
    assert np.array_equal(image, sim.tactile_reference(desk_tactile_params))


def test_render_tactile_pressure_monotone_residual(desk_tactile_params):
    ref = sim.tactile_reference(desk_tactile_params)
    center = (32.0, 32.0)
    low = sim.render_tactile(_frame(center, 0.3, desk_tactile_params), desk_tactile_params)
    high = sim.render_tactile(_frame(center, 0.9, desk_tactile_params), desk_tactile_params)
    assert np.abs(high - ref).mean() > np.abs(low - ref).mean()


def test_render_tactile_marker_centroid_matches_analytic(desk_tactile_params):
    # darkness-weighted centroid of the dot nearest the contact, measured in
    # a window around its displaced position, against the analytic push
    params = desk_tactile_params
    grid = params.grid()
    center = (32.0, 32.0)
    frame = _frame(center, 0.9, params)
    image = sim.render_tactile(frame, params)

    dist = np.linalg.norm(grid.positions - np.asarray(center), axis=1)
    dist[dist < 1e-6] = np.inf               # a dot exactly at center does not move
    nearest = int(np.argmin(dist))
    expected = grid.positions[nearest] + frame.marker_displacements[nearest]

    lum = image @ np.array([0.299, 0.587, 0.114])
    y0, x0 = int(expected[1]) - 3, int(expected[0]) - 3
    window = lum[y0:y0 + 7, x0:x0 + 7]
    darkness = np.clip(0.3 - window, 0.0, None)
    ys, xs = np.mgrid[y0:y0 + 7, x0:x0 + 7]
    cx = (xs * darkness).sum() / darkness.sum()
    cy = (ys * darkness).sum() / darkness.sum()
    assert math.hypot(cx - expected[0], cy - expected[1]) <= 0.5


def test_render_tactile_values_in_unit_range(desk_tactile_params):
    image = sim.render_tactile(_frame((40.0, 28.0), 1.0, desk_tactile_params),
                               desk_tactile_params)
    assert image.min() >= 0.0 and image.max() <= 1.0


# ---------------------------------------------------------------------------
# vision rendering
# ---------------------------------------------------------------------------

def test_render_vision_no_arm_is_reference(desk_scene):
    params = sim.VisionParams()
    a = sim.render_vision(desk_scene, None, params)
    b = sim.render_vision(desk_scene, sim.ArmState(tip=(10.0, 10.0), visible=False), params)
    assert np.array_equal(a, b)


def test_render_vision_deterministic(desk_scene):
    params = sim.VisionParams()
    arm = sim.ArmState(tip=(40.0, 60.0), visible=True)
    assert np.array_equal(sim.render_vision(desk_scene, arm, params),
                          sim.render_vision(desk_scene, arm, params))


def test_render_vision_residual_peak_inside_arm_bbox():
    scene = sim.make_scene(sim.SceneConfig(canvas_size=(128, 128)), seed=3)
    params = sim.VisionParams()
    ref = sim.render_vision(scene, None, params)
    frame = sim.render_vision(scene, sim.ArmState(tip=(40.0, 60.0), visible=True), params)
    residual = np.abs(frame - ref).sum(axis=2)
    iy, ix = np.unravel_index(np.argmax(residual), residual.shape)
    width, length, tip_h = params.arm_geometry((128, 128))
    assert 40.0 - width / 2 - 1 <= ix <= 40.0 + width / 2 + 1
    assert 60.0 - length - tip_h - 1 <= iy <= 60.0 + 1


# ---------------------------------------------------------------------------
# sequence synthesis
# ---------------------------------------------------------------------------

def test_sequence_lengths_and_alignment(desk_scene, desk_tactile_params):
    script = sim.TouchScript(target=(30.0, 36.0))
    seq = sim.synthesize_sequence(desk_scene, script, tactile_params=desk_tactile_params)
    assert seq.vision.shape[0] == 64
    assert seq.touch.shape[0] == 64
    assert seq.vision.shape == seq.touch.shape


def test_sequence_first_frame_matches_references(desk_sequence):
    assert np.array_equal(desk_sequence.vision[0], desk_sequence.ref_vision)
    assert np.array_equal(desk_sequence.touch[0], desk_sequence.ref_touch)
    assert not desk_sequence.annotation.in_contact[0]


def test_sequence_contact_interval_matches_pressure_scan(desk_sequence):
    pressures = desk_sequence.annotation.pressures
    positive = [t for t, p in enumerate(pressures) if p > 0]
    assert desk_sequence.annotation.t_on == positive[0]
    assert desk_sequence.annotation.t_off == positive[-1]
    assert np.array_equal(desk_sequence.annotation.in_contact, pressures > 0)


def test_sequence_no_press_never_in_contact(desk_scene, desk_tactile_params):
    script = sim.TouchScript(target=(30.0, 36.0), approach_frames=6,
                             press_frames=0, release_frames=6)
    seq = sim.synthesize_sequence(desk_scene, script, tactile_params=desk_tactile_params)
    assert not seq.annotation.in_contact.any()
    assert seq.annotation.t_on is None and seq.annotation.t_off is None


def test_sequence_displacements_zero_without_contact(desk_sequence):
    ann = desk_sequence.annotation
    for t in range(desk_sequence.num_frames):
        if not ann.in_contact[t]:
            assert np.all(ann.marker_displacements[t] == 0)


def test_sequence_rejects_target_outside_canvas(desk_scene, desk_tactile_params):
    script = sim.TouchScript(target=(200.0, 10.0))
    with pytest.raises(ConfigError):
        sim.synthesize_sequence(desk_scene, script, tactile_params=desk_tactile_params)


def test_sequence_bitwise_deterministic(desk_scene, desk_tactile_params):
    script = sim.TouchScript(target=(30.0, 36.0), approach_frames=4,
                             press_frames=4, release_frames=4)
    a = sim.synthesize_sequence(desk_scene, script, tactile_params=desk_tactile_params)
    b = sim.synthesize_sequence(desk_scene, script, tactile_params=desk_tactile_params)
    assert np.array_equal(a.vision, b.vision)
    assert np.array_equal(a.touch, b.touch)


def test_sample_touch_target_inside_canvas(desk_scene):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = sim.sample_touch_target(desk_scene, rng)
        assert 0 <= x < 64 and 0 <= y < 64
