"""Reference-conditioned generator and patch discriminator.

The generator encodes the grayscale input window and the RGB reference
pair with two ResNet-18-topology encoders, fuses their latent vectors,
and decodes back to image resolution through five transposed-convolution
stages. Skip connections run only from the reference encoder into the
decoder: the output usually differs from a reference by a localized
change, so low-level reference features are worth carrying across.

Normalization is GroupNorm throughout: batch-size independent, no running
state, and well defined at the 1x1 bottleneck of miniature test configs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .errors import ConfigError, DataError

CHECKPOINT_VERSION = 1

# (reference-encoder tap, decoder stage) pairs; tap k sits at 1/2^(k+1)
# resolution and feeds the decoder stage that produces the same resolution.
DEFAULT_SKIPS = ((0, 4), (1, 3), (2, 2), (3, 1))


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 112
    input_frames: int = 5
    ref_channels: int = 6
    out_channels: int = 3
    latent_dim: int = 512
    width: int = 64
    disc_width: int = 64
    decoder_stages: int = 5
    skip_map: tuple[tuple[int, int], ...] = DEFAULT_SKIPS

    @property
    def fused_dim(self) -> int:
        return 2 * self.latent_dim

    def validate(self) -> None:
        if self.image_size < 16:
            raise ConfigError(f"image_size {self.image_size} below minimum 16")
        if self.decoder_stages != 5:
            raise ConfigError("decoder is laid out for exactly 5 upsampling stages")
        for enc, dec in self.skip_map:
            if not (0 <= enc <= 3 and 1 <= dec <= 4):
                raise ConfigError(f"skip pair ({enc}, {dec}) out of range")


def _groups(channels: int) -> int:
    g = 8
    while channels % g:
        g //= 2
    return max(g, 1)


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(_groups(channels), channels)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.norm1 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.norm2 = _norm(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride, bias=False), _norm(out_ch))
        else:
            self.shortcut = nn.Identity()
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(h + self.shortcut(x))


class ImageEncoder(nn.Module):
    """ResNet-18 layout (2-2-2-2 basic blocks) pooled to a latent vector."""

    def __init__(self, in_channels: int, width: int, latent_dim: int):
        super().__init__()
        w = width
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, w, 7, 2, 3, bias=False), _norm(w), nn.ReLU(inplace=True))
        self.pool = nn.MaxPool2d(3, 2, 1)
        self.layer1 = nn.Sequential(ResidualBlock(w, w), ResidualBlock(w, w))
        self.layer2 = nn.Sequential(ResidualBlock(w, 2 * w, 2), ResidualBlock(2 * w, 2 * w))
        self.layer3 = nn.Sequential(ResidualBlock(2 * w, 4 * w, 2), ResidualBlock(4 * w, 4 * w))
        self.layer4 = nn.Sequential(ResidualBlock(4 * w, 8 * w, 2), ResidualBlock(8 * w, 8 * w))
        self.head = nn.Linear(8 * w, latent_dim)
        self.tap_channels = (w, w, 2 * w, 4 * w)

    def forward(self, x) -> tuple[torch.Tensor, list[torch.Tensor]]:
        t0 = self.stem(x)                 # 1/2
        t1 = self.layer1(self.pool(t0))   # 1/4
        t2 = self.layer2(t1)              # 1/8
        t3 = self.layer3(t2)              # 1/16
        deep = self.layer4(t3)            # 1/32
        latent = self.head(deep.mean(dim=(2, 3)))
        return latent, [t0, t1, t2, t3]


def _stage_sizes(image_size: int) -> list[int]:
    """Spatial sizes from the bottleneck up: [s/32, s/16, ..., s], ceil each."""
    return [math.ceil(image_size / 2 ** k) for k in range(5, -1, -1)]


class Decoder(nn.Module):
    """Five transposed-conv stages from the fused latent to an RGB image.

    Stage kernels are chosen per transition so non power-of-two sizes
    (e.g. 112: 4 -> 7 -> 14 -> 28 -> 56 -> 112) are hit exactly.
    """

    def __init__(self, config: ModelConfig, tap_channels: tuple[int, ...]):
        super().__init__()
        w = config.width
        sizes = _stage_sizes(config.image_size)
        self.bottleneck_size = sizes[0]
        self.entry = nn.Linear(config.fused_dim, 8 * w * sizes[0] ** 2)
        self.entry_channels = 8 * w

        skip_at = {dec: tap_channels[enc] for enc, dec in config.skip_map}
        out_chs = [4 * w, 2 * w, w, w, config.out_channels]
        in_ch = 8 * w
        stages = []
        for d in range(1, 6):
            s_in, s_out = sizes[d - 1], sizes[d]
            if s_out == 2 * s_in:
                kernel = 4
            elif s_out == 2 * s_in - 1:
                kernel = 3
            else:
                raise ConfigError(f"cannot upsample {s_in} -> {s_out} with stride 2")
            out_ch = out_chs[d - 1]
            block = [nn.ConvTranspose2d(in_ch, out_ch, kernel, 2, 1)]
            if d < 5:
                block += [_norm(out_ch), nn.ReLU(inplace=True)]
            else:
                block += [nn.Tanh()]
            stages.append(nn.Sequential(*block))
            in_ch = out_ch + skip_at.get(d, 0)
        self.stages = nn.ModuleList(stages)
        self.skip_at = skip_at
        self.skip_source = {dec: enc for enc, dec in config.skip_map}

    def forward(self, fused: torch.Tensor, taps: list[torch.Tensor]) -> torch.Tensor:
        s = self.bottleneck_size
        h = self.entry(fused).reshape(-1, self.entry_channels, s, s)
        for d, stage in enumerate(self.stages, start=1):
            h = stage(h)
            if d in self.skip_source:
                h = torch.cat([h, taps[self.skip_source[d]]], dim=1)
        return h


class Generator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.input_encoder = ImageEncoder(config.input_frames, config.width, config.latent_dim)
        self.reference_encoder = ImageEncoder(config.ref_channels, config.width, config.latent_dim)
        self.decoder = Decoder(config, self.reference_encoder.tap_channels)

    def encode(self, inputs: torch.Tensor, refs: torch.Tensor):
        """Latents and reference taps; exposed so the fusion contract is testable."""
        z_in, _ = self.input_encoder(inputs)
        z_ref, taps = self.reference_encoder(refs)
        return z_in, z_ref, taps

    def forward(self, inputs: torch.Tensor, refs: torch.Tensor) -> torch.Tensor:
        s = self.config.image_size
        if inputs.shape[-2:] != (s, s) or refs.shape[-2:] != (s, s):
            raise ConfigError(f"expected {s}x{s} inputs, got {tuple(inputs.shape)} / {tuple(refs.shape)}")
        if inputs.shape[1] != self.config.input_frames or refs.shape[1] != self.config.ref_channels:
            raise ConfigError("channel counts do not match the model configuration")
        z_in, z_ref, taps = self.encode(inputs, refs)
        return self.decoder(torch.cat([z_in, z_ref], dim=1), taps)


class Discriminator(nn.Module):
    """Five stride-2 conv stages over (inputs, refs, candidate), patch scores.

    The head is linear: raw scores are regressed toward real/fake targets,
    so no terminal squashing.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        w = config.disc_width
        in_ch = config.input_frames + config.ref_channels + config.out_channels
        chs = [w, 2 * w, 4 * w, 8 * w, 8 * w]
        layers: list[nn.Module] = []
        for i, out_ch in enumerate(chs):
            layers.append(nn.Conv2d(in_ch, out_ch, 3, 2, 1, bias=(i == 0)))
            if i > 0:
                layers.append(_norm(out_ch))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            in_ch = out_ch
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv2d(in_ch, 1, 1)
        self.expected_channels = config.input_frames + config.ref_channels + config.out_channels

    def forward(self, inputs: torch.Tensor, refs: torch.Tensor,
                candidate: torch.Tensor) -> torch.Tensor:
        x = torch.cat([inputs, refs, candidate], dim=1)
        if x.shape[1] != self.expected_channels:
            raise ConfigError(f"discriminator got {x.shape[1]} channels, "
                              f"expected {self.expected_channels}")
        return self.head(self.body(x))


@dataclass
class ModelParams:
    """Generator/discriminator pair plus the configuration that shaped them."""

    config: ModelConfig
    generator: Generator
    discriminator: Discriminator

    def all_finite(self) -> bool:
        return all(torch.isfinite(p).all()
                   for m in (self.generator, self.discriminator)
                   for p in m.parameters())


def _init_module(module: nn.Module, gen: torch.Generator) -> None:
    # fan-in scaled zero-mean weights; iteration over modules() is
    # definition-ordered, which makes the draw sequence reproducible
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            k = m.kernel_size[0] * m.kernel_size[1]
            fan_in = (m.weight.shape[1] if isinstance(m, nn.Conv2d) else m.weight.shape[0]) * k
            std = math.sqrt(2.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * std)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.Linear):
            std = math.sqrt(2.0 / m.weight.shape[1])
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * std)
                m.bias.zero_()
        elif isinstance(m, nn.GroupNorm):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Build and deterministically initialize both networks."""
    gen = torch.Generator().manual_seed(seed)
    generator = Generator(config)
    discriminator = Discriminator(config)
    _init_module(generator, gen)
    _init_module(discriminator, gen)
    return ModelParams(config=config, generator=generator, discriminator=discriminator)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["format_version"] = CHECKPOINT_VERSION
    torch.save(payload, path)


def load_checkpoint(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing checkpoint {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    return payload


def params_from_checkpoint(payload: dict) -> ModelParams:
    config = ModelConfig(**payload["model_config"])
    params = init_params(config, seed=0)
    params.generator.load_state_dict(payload["generator"])
    params.discriminator.load_state_dict(payload["discriminator"])
    return params


def model_config_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    d["skip_map"] = tuple(tuple(p) for p in config.skip_map)
    return d
