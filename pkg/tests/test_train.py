import csv
import dataclasses

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vistact import model, train
from vistact.data import AugmentParams, augment, build_index, build_sampler, make_training_sample
from vistact.errors import ConfigError, NumericError

MINI = model.ModelConfig(image_size=16, width=4, disc_width=4, latent_dim=16)
FAST_AUG = AugmentParams(crop_size=16, brightness=0.0, contrast=0.0,
                         saturation=0.0, hue=0.0)


def _mini_batch(mini_dataset, n=2, crop=16):
    index = build_index(mini_dataset, "train")
    flags = index.contact_flags()
    picks = list(np.nonzero(flags)[0][:n - 1]) + list(np.nonzero(~flags)[0][:1])
    params = AugmentParams(crop_size=crop, brightness=0.0, contrast=0.0,
                           saturation=0.0, hue=0.0)
    samples = [augment(make_training_sample(index, int(i)), seed=0, params=params)
               for i in picks[:n]]
    return train.batch_from_samples(samples)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def test_lsgan_perfect_discriminator():
    ones, zeros = torch.ones(2, 1, 4, 4), torch.zeros(2, 1, 4, 4)
    loss_d, loss_g = train.lsgan_losses(ones, zeros)
    assert loss_d.item() == pytest.approx(0.0)
    assert loss_g.item() == pytest.approx(0.5)


def test_lsgan_hand_computed_midpoint():
    half = torch.full((3, 5), 0.5)
    loss_d, loss_g = train.lsgan_losses(half, half)
    assert loss_d.item() == pytest.approx(0.25)
    assert loss_g.item() == pytest.approx(0.125)


def test_lsgan_fooled_discriminator():
    _, loss_g = train.lsgan_losses(torch.zeros(4), torch.ones(4))
    assert loss_g.item() == pytest.approx(0.0)


def test_lsgan_rejects_shape_mismatch():
    with pytest.raises(ConfigError):
        train.lsgan_losses(torch.zeros(2, 3), torch.zeros(3, 2))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8),
       st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_lsgan_losses_nonnegative(real, fake):
    n = min(len(real), len(fake))
    loss_d, loss_g = train.lsgan_losses(torch.tensor(real[:n]), torch.tensor(fake[:n]))
    assert loss_d.item() >= 0.0
    assert loss_g.item() >= 0.0


def test_lsgan_loss_d_zero_iff_perfect():
    d_real, d_fake = torch.tensor([1.0, 1.0]), torch.tensor([0.0, 0.0])
    assert train.lsgan_losses(d_real, d_fake)[0].item() == 0.0
    # any deviation makes it strictly positive
    assert train.lsgan_losses(torch.tensor([1.0, 0.999]), d_fake)[0].item() > 0.0
    assert train.lsgan_losses(d_real, torch.tensor([0.0, 1e-3]))[0].item() > 0.0


def test_l1_loss_cases():
    a = torch.tensor([0.0, 1.0])
    assert train.l1_loss(a, a).item() == pytest.approx(0.0)
    assert train.l1_loss(a + 0.3, a).item() == pytest.approx(0.3)
    assert train.l1_loss(torch.tensor([0.0, 1.0]), torch.tensor([1.0, 0.0])).item() == pytest.approx(1.0)


def test_l1_loss_rejects_shape_mismatch():
    with pytest.raises(ConfigError):
        train.l1_loss(torch.zeros(2, 2), torch.zeros(4))


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

def test_batch_tensors_scaled_and_ordered(mini_dataset):
    index = build_index(mini_dataset, "train")
    sample = make_training_sample(index, 0)
    batch = train.batch_from_samples([sample])
    assert batch.inputs.shape == (1, 5, 64, 64)
    assert batch.refs.shape == (1, 6, 64, 64)
    assert batch.targets.shape == (1, 3, 64, 64)
    assert batch.inputs.min() >= -1.0 and batch.inputs.max() <= 1.0
    # reference order is (vision, touch)
    expected_v = torch.from_numpy(
        (np.moveaxis(sample.ref_vision, -1, 0) * 2 - 1).astype(np.float32))
    assert torch.allclose(batch.refs[0, :3], expected_v, atol=1e-6)


def test_batch_zeroed_references(mini_dataset):
    index = build_index(mini_dataset, "train")
    sample = make_training_sample(index, 0)
    batch = train.batch_from_samples([sample], use_reference=False)
    assert torch.all(batch.refs == 0)


# ---------------------------------------------------------------------------
# train_step
# ---------------------------------------------------------------------------

def test_train_step_deterministic(mini_dataset):
    batch = _mini_batch(mini_dataset)
    outs = []
    for _ in range(2):
        state = train.init_state(MINI, train.TrainConfig(batch_size=2, seed=3))
        train.train_step(state, batch)
        outs.append([p.detach().clone() for p in state.params.generator.parameters()])
    for a, b in zip(*outs):
        assert torch.equal(a, b)


def test_train_step_lambda_zero_is_pure_adversarial(mini_dataset):
    # with lambda = 0 the generator update must equal an Adam step on the
    # adversarial loss alone, replicated manually on an identical twin
    batch = _mini_batch(mini_dataset)
    cfg = train.TrainConfig(batch_size=2, seed=3, lambda_l1=0.0)
    state = train.init_state(MINI, cfg)
    twin = train.init_state(MINI, cfg)

    train.train_step(state, batch)

    g, d = twin.params.generator, twin.params.discriminator
    with torch.no_grad():
        fake_detached = g(batch.inputs, batch.refs)
    d_real = d(batch.inputs, batch.refs, batch.targets)
    d_fake = d(batch.inputs, batch.refs, fake_detached)
    loss_d = 0.5 * ((d_real - 1.0) ** 2).mean() + 0.5 * (d_fake ** 2).mean()
    twin.opt_d.zero_grad()
    loss_d.backward()
    twin.opt_d.step()
    fake = g(batch.inputs, batch.refs)
    score = d(batch.inputs, batch.refs, fake)
    loss_g_adv = 0.5 * ((score - 1.0) ** 2).mean()
    twin.opt_g.zero_grad()
    loss_g_adv.backward()
    twin.opt_g.step()

    for a, b in zip(state.params.generator.parameters(), g.parameters()):
        assert torch.allclose(a, b, atol=1e-7)


def test_train_step_losses_recorded_finite(mini_dataset):
    state = train.init_state(MINI, train.TrainConfig(batch_size=2, seed=0))
    train.train_step(state, _mini_batch(mini_dataset))
    assert state.step == 1
    assert set(state.last_losses) == {"loss_D", "loss_G_adv", "loss_G_L1"}
    assert all(np.isfinite(v) for v in state.last_losses.values())


def test_train_step_aborts_on_nonfinite(tmp_path, mini_dataset):
    state = train.init_state(MINI, train.TrainConfig(batch_size=2, seed=0),
                             out_dir=tmp_path)
    with torch.no_grad():
        next(state.params.generator.parameters())[0] = float("nan")
    with pytest.raises(NumericError):
        train.train_step(state, _mini_batch(mini_dataset))
    assert list(tmp_path.glob("diagnostic_step*.pt"))


def test_checkpoint_roundtrip_preserves_next_step(tmp_path, mini_dataset):
    # serialize -> restore -> one step must equal one step without the
    # round-trip, including optimizer moments and the sampling RNG
    batch = _mini_batch(mini_dataset)
    state = train.init_state(MINI, train.TrainConfig(batch_size=2, seed=5))
    for _ in range(2):
        train.train_step(state, batch)

    path = tmp_path / "mid.pt"
    train.save_checkpoint(path, train.checkpoint_payload(state))
    restored = train.restore_state(model.load_checkpoint(path))

    train.train_step(state, batch)
    train.train_step(restored, batch)
    assert restored.step == state.step
    assert restored.rng.bit_generator.state == state.rng.bit_generator.state
    for a, b in zip(state.params.generator.parameters(),
                    restored.params.generator.parameters()):
        assert torch.equal(a, b)
    for a, b in zip(state.params.discriminator.parameters(),
                    restored.params.discriminator.parameters()):
        assert torch.equal(a, b)


@pytest.mark.slow
def test_overfit_single_batch_drops_l1_tenfold(mini_dataset):
    # miniature model, one fixed batch, 500 steps: the L1 term must fall
    # by at least 10x from its first value
    batch = _mini_batch(mini_dataset, n=2, crop=16)
    cfg = train.TrainConfig(batch_size=2, seed=0, lr=2e-3, steps=500)
    state = train.init_state(MINI, cfg)
    first = None
    for _ in range(500):
        train.train_step(state, batch)
        if first is None:
            first = state.last_losses["loss_G_L1"]
    assert state.last_losses["loss_G_L1"] <= first / 10.0


# ---------------------------------------------------------------------------
# sampling follows p_w
# ---------------------------------------------------------------------------

def test_batch_sampling_matches_weights_chi_square():
    rng = np.random.default_rng(17)
    weights = rng.uniform(0.2, 3.0, size=40)
    sampler = build_sampler(weights)
    draws = sampler.draw(np.random.default_rng(23), 10_000)
    observed = np.bincount(draws, minlength=40)
    expected = sampler.probabilities * 10_000
    _, p_value = stats.chisquare(observed, expected)
    assert p_value > 0.01


# ---------------------------------------------------------------------------
# train_loop
# ---------------------------------------------------------------------------

def _loop_config(steps, **kw):
    return train.TrainConfig(batch_size=2, seed=11, steps=steps, log_every=1,
                             checkpoint_every=kw.pop("checkpoint_every", 3),
                             augment=FAST_AUG, **kw)


def test_train_loop_zero_steps_emits_initial_checkpoint(tmp_path, mini_dataset):
    index = build_index(mini_dataset, "train")
    final = train.train_loop(index, MINI, _loop_config(0), tmp_path)
    assert final.exists()
    payload = model.load_checkpoint(final)
    assert payload["step"] == 0
    rows = list(csv.DictReader(open(tmp_path / "loss_log.csv")))
    assert rows == []


def test_train_loop_writes_log_and_checkpoints(tmp_path, mini_dataset):
    index = build_index(mini_dataset, "train")
    train.train_loop(index, MINI, _loop_config(4), tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "loss_log.csv")))
    assert [int(r["step"]) for r in rows] == [1, 2, 3, 4]
    assert set(rows[0]) == {"step", "loss_D", "loss_G_adv", "loss_G_L1"}
    assert (tmp_path / "checkpoint_000003.pt").exists()


def test_train_loop_resume_matches_uninterrupted(tmp_path, mini_dataset):
    index = build_index(mini_dataset, "train")
    solid_dir, split_dir = tmp_path / "solid", tmp_path / "split"

    train.train_loop(index, MINI, _loop_config(6), solid_dir)
    train.train_loop(index, MINI, _loop_config(3), split_dir)
    train.train_loop(index, MINI, _loop_config(6), split_dir,
                     resume=split_dir / "checkpoint_000003.pt")

    log_a = (solid_dir / "loss_log.csv").read_text()
    log_b = (split_dir / "loss_log.csv").read_text()
    assert log_a == log_b

    pa = model.params_from_checkpoint(model.load_checkpoint(solid_dir / "checkpoint_final.pt"))
    pb = model.params_from_checkpoint(model.load_checkpoint(split_dir / "checkpoint_final.pt"))
    for a, b in zip(pa.generator.parameters(), pb.generator.parameters()):
        assert torch.equal(a, b)
    for a, b in zip(pa.discriminator.parameters(), pb.discriminator.parameters()):
        assert torch.equal(a, b)


def test_train_loop_rejects_mismatched_resume(tmp_path, mini_dataset):
    index = build_index(mini_dataset, "train")
    train.train_loop(index, MINI, _loop_config(2), tmp_path)
    other_model = dataclasses.replace(MINI, width=8)
    with pytest.raises(ConfigError):
        train.train_loop(index, other_model, _loop_config(4), tmp_path,
                         resume=tmp_path / "checkpoint_final.pt")
    other_train = _loop_config(4, lr=9e-4)
    with pytest.raises(ConfigError):
        train.train_loop(index, MINI, other_train, tmp_path,
                         resume=tmp_path / "checkpoint_final.pt")


def test_train_loop_direction_consistency(tmp_path, mini_dataset):
    index = build_index(mini_dataset, "train", direction="t2v")
    with pytest.raises(ConfigError):
        train.train_loop(index, MINI, _loop_config(1), tmp_path)  # default v2t


def test_train_config_validation():
    with pytest.raises(ConfigError):
        train.TrainConfig(direction="up").validate()
    with pytest.raises(ConfigError):
        train.TrainConfig(lambda_l1=-1.0).validate()
    with pytest.raises(ConfigError):
        train.TrainConfig(lr=0.0).validate()
