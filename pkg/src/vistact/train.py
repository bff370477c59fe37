"""Adversarial training of the cross-modal translator.

Least-squares GAN objectives with an L1 regression term, optimized with
Adam. Each step alternates one discriminator update and one generator
update on a batch drawn from the rarity-weighted sampler. All randomness
flows through a single numpy generator whose state is checkpointed, so a
resumed run continues the exact trajectory of an uninterrupted one.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .data import (AugmentParams, DatasetIndex, TrainingSample, augment,
                   build_sampler, make_training_sample)
from .errors import ConfigError, NumericError
from .model import (ModelConfig, ModelParams, init_params, load_checkpoint,
                    model_config_dict, params_from_checkpoint, save_checkpoint)

LOSS_LOG_NAME = "loss_log.csv"
LOSS_COLUMNS = ("step", "loss_D", "loss_G_adv", "loss_G_L1")


@dataclass(frozen=True)
class TrainConfig:
    direction: str = "v2t"            # v2t | t2v
    lambda_l1: float = 10.0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 8
    steps: int = 2000
    seed: int = 0
    rebalance: bool = True
    temporal: bool = True
    use_reference: bool = True
    augment: AugmentParams = field(default_factory=AugmentParams)
    log_every: int = 10
    checkpoint_every: int = 500

    def validate(self) -> None:
        if self.direction not in ("v2t", "t2v"):
            raise ConfigError(f"direction must be v2t or t2v, got {self.direction!r}")
        if self.lambda_l1 < 0:
            raise ConfigError("lambda_l1 must be nonnegative")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("batch_size must be >= 1 and steps >= 0")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def lsgan_losses(d_real: torch.Tensor, d_fake: torch.Tensor):
    """Least-squares adversarial losses.

    loss_D = 0.5 mean[(d_real - 1)^2] + 0.5 mean[d_fake^2]
    loss_G = 0.5 mean[(d_fake - 1)^2]
    """
    if d_real.shape != d_fake.shape:
        raise ConfigError(f"score shapes differ: {tuple(d_real.shape)} vs {tuple(d_fake.shape)}")
    loss_d = 0.5 * ((d_real - 1.0) ** 2).mean() + 0.5 * (d_fake ** 2).mean()
    loss_g = 0.5 * ((d_fake - 1.0) ** 2).mean()
    return loss_d, loss_g


def l1_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all elements."""
    if predicted.shape != target.shape:
        raise ConfigError(f"shape mismatch: {tuple(predicted.shape)} vs {tuple(target.shape)}")
    return (predicted - target).abs().mean()


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

@dataclass
class TrainBatch:
    inputs: torch.Tensor   # (B, 5, H, W) in [-1, 1]
    refs: torch.Tensor     # (B, 6, H, W) in [-1, 1]
    targets: torch.Tensor  # (B, 3, H, W) in [-1, 1]


def batch_from_samples(samples: list[TrainingSample],
                       use_reference: bool = True) -> TrainBatch:
    """Stack samples into model tensors, rescaling [0,1] -> [-1,1].

    References are always ordered (vision, touch). With use_reference off
    the reference tensor is zeroed, which silences the reference branch
    without touching the architecture.
    """
    def chw(img: np.ndarray) -> np.ndarray:
        return np.moveaxis(img, -1, 0)

    x = np.stack([s.inputs for s in samples])
    r = np.stack([np.concatenate([chw(s.ref_vision), chw(s.ref_touch)]) for s in samples])
    y = np.stack([chw(s.target) for s in samples])
    to = lambda a: torch.from_numpy(np.ascontiguousarray(a * 2.0 - 1.0, dtype=np.float32))
    refs = to(r)
    if not use_reference:
        refs = torch.zeros_like(refs)
    return TrainBatch(inputs=to(x), refs=refs, targets=to(y))


def draw_batch(index: DatasetIndex, sampler, rng: np.random.Generator,
               config: TrainConfig) -> TrainBatch:
    picks = sampler.draw(rng, config.batch_size)
    samples = []
    for i in picks:
        sample = make_training_sample(index, int(i), temporal=config.temporal)
        sample = augment(sample, seed=int(rng.integers(2 ** 31)), params=config.augment)
        samples.append(sample)
    return batch_from_samples(samples, use_reference=config.use_reference)


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    config: TrainConfig
    params: ModelParams
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    rng: np.random.Generator
    step: int = 0
    last_losses: dict = field(default_factory=dict)
    out_dir: Optional[Path] = None


def init_state(model_config: ModelConfig, train_config: TrainConfig,
               out_dir: Optional[Path] = None) -> TrainState:
    train_config.validate()
    params = init_params(model_config, seed=train_config.seed)
    opt_g = torch.optim.Adam(params.generator.parameters(), lr=train_config.lr,
                             betas=(train_config.beta1, train_config.beta2))
    opt_d = torch.optim.Adam(params.discriminator.parameters(), lr=train_config.lr,
                             betas=(train_config.beta1, train_config.beta2))
    rng = np.random.default_rng(train_config.seed)
    return TrainState(config=train_config, params=params, opt_g=opt_g,
                      opt_d=opt_d, rng=rng, out_dir=out_dir)


def train_step(state: TrainState, batch: TrainBatch) -> TrainState:
    """One alternating update: D on real/fake, then G on adversarial + L1."""
    g, d = state.params.generator, state.params.discriminator
    cfg = state.config

    with torch.no_grad():
        fake_detached = g(batch.inputs, batch.refs)
    d_real = d(batch.inputs, batch.refs, batch.targets)
    d_fake = d(batch.inputs, batch.refs, fake_detached)
    loss_d, _ = lsgan_losses(d_real, d_fake)
    state.opt_d.zero_grad()
    loss_d.backward()
    state.opt_d.step()

    fake = g(batch.inputs, batch.refs)
    d_fake = d(batch.inputs, batch.refs, fake)
    _, loss_g_adv = lsgan_losses(d_real.detach(), d_fake)
    loss_g_l1 = l1_loss(fake, batch.targets)
    loss_g = loss_g_adv + cfg.lambda_l1 * loss_g_l1
    state.opt_g.zero_grad()
    loss_g.backward()
    state.opt_g.step()

    losses = {"loss_D": loss_d.item(), "loss_G_adv": loss_g_adv.item(),
              "loss_G_L1": loss_g_l1.item()}
    if not all(np.isfinite(v) for v in losses.values()):
        snapshot = None
        if state.out_dir is not None:
            snapshot = Path(state.out_dir) / f"diagnostic_step{state.step:06d}.pt"
            save_checkpoint(snapshot, checkpoint_payload(state))
        raise NumericError(f"non-finite loss at step {state.step}: {losses}"
                           + (f" (snapshot: {snapshot})" if snapshot else ""))
    state.step += 1
    state.last_losses = losses
    return state


def checkpoint_payload(state: TrainState) -> dict:
    return {
        "model_config": model_config_dict(state.params.config),
        "train_config": asdict(state.config),
        "step": state.step,
        "generator": state.params.generator.state_dict(),
        "discriminator": state.params.discriminator.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "rng_state": state.rng.bit_generator.state,
        "last_losses": state.last_losses,
    }


def restore_state(payload: dict, out_dir: Optional[Path] = None) -> TrainState:
    train_config = _train_config_from_dict(payload["train_config"])
    params = params_from_checkpoint(payload)
    opt_g = torch.optim.Adam(params.generator.parameters(), lr=train_config.lr,
                             betas=(train_config.beta1, train_config.beta2))
    opt_d = torch.optim.Adam(params.discriminator.parameters(), lr=train_config.lr,
                             betas=(train_config.beta1, train_config.beta2))
    opt_g.load_state_dict(payload["opt_g"])
    opt_d.load_state_dict(payload["opt_d"])
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    return TrainState(config=train_config, params=params, opt_g=opt_g, opt_d=opt_d,
                      rng=rng, step=payload["step"],
                      last_losses=payload.get("last_losses", {}), out_dir=out_dir)


def _train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    if isinstance(d.get("augment"), dict):
        d["augment"] = AugmentParams(**d["augment"])
    return TrainConfig(**d)


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

def _read_log_rows(path: Path, up_to_step: int) -> list[dict]:
    if not path.exists():
        return []
    with open(path) as fh:
        rows = [row for row in csv.DictReader(fh) if int(row["step"]) <= up_to_step]
    return rows


def train_loop(index: DatasetIndex, model_config: ModelConfig,
               train_config: TrainConfig, out_dir: Path,
               resume: Optional[Path] = None) -> Path:
    """Run (or continue) training; returns the final checkpoint path.

    Writes `loss_log.csv` and periodic `checkpoint_<step>.pt` files under
    `out_dir`. Resuming restores parameters, optimizer moments, and the
    sampling RNG, so the log beyond the resume point matches what an
    uninterrupted run would have written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(index) == 0:
        raise ConfigError("empty dataset index")

    if resume is not None:
        payload = load_checkpoint(resume)
        stored_mc = dict(payload["model_config"])
        stored_mc["skip_map"] = tuple(tuple(p) for p in stored_mc["skip_map"])
        if stored_mc != model_config_dict(model_config):
            raise ConfigError("checkpoint model configuration does not match the request")
        stored_tc = _train_config_from_dict(payload["train_config"])
        if _comparable(stored_tc) != _comparable(train_config):
            raise ConfigError("checkpoint training configuration does not match the request")
        state = restore_state(payload, out_dir=out_dir)
        log_rows = _read_log_rows(out_dir / LOSS_LOG_NAME, up_to_step=state.step)
    else:
        state = init_state(model_config, train_config, out_dir=out_dir)
        log_rows = []

    if train_config.direction != index.direction:
        raise ConfigError(f"index direction {index.direction!r} does not match "
                          f"training direction {train_config.direction!r}")

    weights = index.weights if train_config.rebalance else np.ones(len(index))
    sampler = build_sampler(weights)

    log_path = out_dir / LOSS_LOG_NAME
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS)
        writer.writeheader()
        for row in log_rows:
            writer.writerow(row)

        while state.step < train_config.steps:
            batch = draw_batch(index, sampler, state.rng, train_config)
            train_step(state, batch)
            if (state.step == 1 or state.step % train_config.log_every == 0
                    or state.step == train_config.steps):
                writer.writerow({"step": state.step, **{k: f"{v:.6f}" for k, v in
                                                        state.last_losses.items()}})
                fh.flush()
            if (train_config.checkpoint_every > 0
                    and state.step % train_config.checkpoint_every == 0):
                save_checkpoint(out_dir / f"checkpoint_{state.step:06d}.pt",
                                checkpoint_payload(state))

    final = out_dir / "checkpoint_final.pt"
    save_checkpoint(final, checkpoint_payload(state))
    return final


def _comparable(config: TrainConfig) -> dict:
    d = asdict(config)
    d.pop("steps")             # resuming may extend the run
    d.pop("checkpoint_every")
    d.pop("log_every")
    return d
