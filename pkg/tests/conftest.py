import numpy as np
import pytest

from vistact import sim


@pytest.fixture(scope="session")
def desk_scene():
    return sim.make_scene(sim.SceneConfig(canvas_size=(64, 64)), seed=21)


@pytest.fixture(scope="session")
def desk_tactile_params():
    return sim.TactileParams(canvas_size=(64, 64), marker_rows=9, marker_cols=9,
                             push_amplitude=3.0, push_sigma=7.0,
                             indent_sigma=7.0, indent_depth=5.6)


@pytest.fixture(scope="session")
def desk_sequence(desk_scene, desk_tactile_params):
    script = sim.TouchScript(target=(30.0, 36.0), approach_frames=5,
                             press_frames=8, release_frames=5, peak_pressure=0.9)
    return sim.synthesize_sequence(desk_scene, script,
                                   tactile_params=desk_tactile_params, seq_id="fixture")


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """Small generated dataset shared by data/train/cli tests."""
    from vistact.config import DataGenConfig
    from vistact.generate import generate_dataset

    cfg = DataGenConfig(out="unused", canvas=64, approach_frames=6, press_frames=8,
                        release_frames=6, n_train=4, n_test_seen=2, n_test_unseen=1,
                        marker_rows=9, marker_cols=9, push_amplitude=3.0,
                        push_sigma=7.0, indent_sigma=7.0, indent_depth=5.6)
    root = tmp_path_factory.mktemp("mini_dataset")
    generate_dataset(cfg, seed=5, out_dir=root, force=True)
    return root


def assert_images_equal(a: np.ndarray, b: np.ndarray):
    assert a.shape == b.shape
    assert np.array_equal(a, b)
