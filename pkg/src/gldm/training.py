"""Learned score models: a small convolutional denoiser trained by DSM.

The network sees the k-space frame through the unitary inverse FFT and
returns a denoised image ``D``; the k-space score is
``fft2c((D - x) / sigma^2)``.  Because the FFT is unitary this is exactly the
k-space score of the same model, and the weighted DSM objective
``||sigma * S + z||^2`` equals ``||(D - x0) / sigma||^2`` in either domain.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .errors import BadMagic, Diverged, EmptyDataset, ShapeMismatch, Truncated
from .prior import TRAINING_SCHEDULE, NoiseSchedule, Role, normalize_kspace
from .transforms import fft2c, ifft2c

CKPT_MAGIC = b"GLM1"
_CKPT_HEAD = struct.Struct("<4sB3xddII")


class DenoiserNet(nn.Module):
    """Preconditioned image denoiser ``D(x, sigma) = c_skip x + c_out F(c_in x, sigma)``.

    ``F`` is a plain conv stack whose last layer starts at zero, so an
    untrained model is the scalar Wiener shrinkage ``c_skip * x``.
    """

    def __init__(self, channels: int = 32, depth: int = 5, sigma_data: float = 0.5):
        super().__init__()
        self.channels = channels
        self.depth = depth
        self.sigma_data = float(sigma_data)
        layers: list[nn.Module] = [nn.Conv2d(3, channels, 3, padding=1), nn.SiLU()]
        for i in range(depth - 2):
            d = 2 ** (i % 3)
            layers += [nn.Conv2d(channels, channels, 3, padding=d, dilation=d), nn.SiLU()]
        last = nn.Conv2d(channels, 2, 3, padding=1)
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)
        layers.append(last)
        self.body = nn.Sequential(*layers)

    def coefficients(self, sigma: torch.Tensor):
        sd2 = self.sigma_data**2
        total = sigma**2 + sd2
        c_skip = sd2 / total
        c_out = sigma * self.sigma_data / torch.sqrt(total)
        c_in = 1.0 / torch.sqrt(total)
        return c_skip, c_out, c_in

    def residual(self, x: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
        """Network branch ``F``; ``x`` is (B, 2, H, W) and ``sigma`` is (B,)."""
        s = sigma.view(-1, 1, 1, 1)
        _, _, c_in = self.coefficients(s)
        noise_chan = (torch.log(s) / 4.0).expand(-1, 1, *x.shape[-2:])
        return self.body(torch.cat([x * c_in, noise_chan], dim=1))

    def forward(self, x: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
        s = sigma.view(-1, 1, 1, 1)
        c_skip, c_out, _ = self.coefficients(s)
        return c_skip * x + c_out * self.residual(x, sigma)


def _to_channels(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.stack([img.real, img.imag], axis=-3).astype(np.float32))


def _from_channels(t: torch.Tensor) -> np.ndarray:
    a = t.detach().numpy().astype(np.float64)
    return a[..., 0, :, :] + 1j * a[..., 1, :, :]


@dataclass(eq=False)
class LearnedScoreModel:
    role: Role
    schedule: NoiseSchedule
    net: DenoiserNet
    loss_curve: list[float] = field(default_factory=list)

    @property
    def architecture(self) -> dict:
        return {
            "arch": "image-cnn",
            "channels": self.net.channels,
            "depth": self.net.depth,
            "sigma_data": self.net.sigma_data,
        }

    def score(self, x, sigma) -> np.ndarray:
        x = np.asarray(x)
        lead = x.shape[:-2]
        flat = x.reshape((-1,) + x.shape[-2:])
        sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), lead).reshape(-1)
        img = ifft2c(flat)
        with torch.no_grad():
            s_t = torch.from_numpy(sig.astype(np.float32))
            _, c_out, _ = self.net.coefficients(s_t.view(-1, 1, 1, 1))
            f = self.net.residual(_to_channels(img), s_t) * c_out
        sd2 = self.net.sigma_data**2
        s3 = sig[:, None, None]
        # (D - x) / sigma^2 with the c_skip - 1 term kept in float64
        s_img = -img / (s3**2 + sd2) + _from_channels(f) / s3**2
        return fft2c(s_img).reshape(x.shape)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1500
    batch_size: int = 4
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    channels: int = 32
    depth: int = 5
    grad_clip: float | None = None
    threads: int | None = None


def prepare_dataset(frames: Sequence[np.ndarray]) -> np.ndarray:
    """Normalise merged k-space frames and return their complex images."""
    if len(frames) == 0:
        raise EmptyDataset("training set is empty")
    shapes = {np.shape(f) for f in frames}
    if len(shapes) != 1:
        raise ShapeMismatch(f"training samples differ in shape: {sorted(shapes)}")
    return np.stack([ifft2c(normalize_kspace(f)[0]) for f in frames])


def train(
    dataset: Sequence[np.ndarray],
    role: Role,
    schedule: NoiseSchedule = TRAINING_SCHEDULE,
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
    progress=None,
) -> LearnedScoreModel:
    """Fit a score model to merged k-space frames by denoising score matching.

    Each step draws ``batch_size`` samples and one noise level per sample,
    uniformly over the schedule's levels, and minimises the sigma^2-weighted
    DSM loss with Adam.  ``progress(step, loss)`` is called every step.
    """
    images = prepare_dataset(dataset)
    if config.threads:
        torch.set_num_threads(config.threads)
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    sigma_data = float(np.sqrt(np.mean(np.abs(images) ** 2) / 2))
    net = DenoiserNet(config.channels, config.depth, sigma_data)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr, betas=config.betas)
    data = _to_channels(images)
    levels = torch.from_numpy(schedule.levels.astype(np.float32))
    curve: list[float] = []
    for step in range(config.steps):
        idx = torch.randint(0, len(data), (config.batch_size,), generator=gen)
        x0 = data[idx]
        sigma = levels[torch.randint(0, schedule.n_levels, (config.batch_size,), generator=gen)]
        z = torch.randn(x0.shape, generator=gen)
        s = sigma.view(-1, 1, 1, 1)
        d = net(x0 + s * z, sigma)
        loss = (((d - x0) / s) ** 2).sum(dim=(1, 2, 3)).mean()
        value = float(loss.detach())
        if not math.isfinite(value):
            raise Diverged(f"loss became {value} at step {step}")
        opt.zero_grad()
        loss.backward()
        if config.grad_clip:
            nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
        opt.step()
        curve.append(value)
        if progress is not None:
            progress(step, value)
    net.eval()
    return LearnedScoreModel(Role(role), schedule, net, curve)


def untrained_model(dataset: Sequence[np.ndarray], role: Role, schedule: NoiseSchedule = TRAINING_SCHEDULE,
                    config: TrainConfig = TrainConfig(), seed: int = 0) -> LearnedScoreModel:
    """The model :func:`train` starts from, before any optimisation step."""
    return train(dataset, role, schedule, TrainConfig(**{**config.__dict__, "steps": 0}), seed)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: LearnedScoreModel, path) -> None:
    state = model.net.state_dict()
    desc = dict(model.architecture)
    desc["params"] = [[k, list(v.shape)] for k, v in state.items()]
    desc["loss_curve"] = model.loss_curve
    blob = b"".join(v.detach().numpy().astype("<f4").tobytes() for v in state.values())
    desc_bytes = json.dumps(desc).encode()
    role = 0 if model.role == Role.GLOBAL else 1
    sched = model.schedule
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEAD.pack(CKPT_MAGIC, role, sched.sigma_min, sched.sigma_max, sched.n_levels, len(desc_bytes)))
        fh.write(desc_bytes)
        fh.write(struct.pack("<Q", len(blob) // 4))
        fh.write(blob)


def load_checkpoint(path) -> LearnedScoreModel:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEAD.size:
        raise Truncated(f"{path}: checkpoint header truncated")
    magic, role, smin, smax, n_levels, dlen = _CKPT_HEAD.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} != {CKPT_MAGIC!r}")
    off = _CKPT_HEAD.size
    desc = json.loads(raw[off:off + dlen].decode())
    off += dlen
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) - off != 4 * count:
        raise Truncated(f"{path}: parameter blob has {len(raw) - off} bytes, expected {4 * count}")
    flat = np.frombuffer(raw, dtype="<f4", offset=off)
    net = DenoiserNet(desc["channels"], desc["depth"], desc["sigma_data"])
    state = {}
    pos = 0
    for name, shape in desc["params"]:
        n = int(np.prod(shape))
        state[name] = torch.from_numpy(flat[pos:pos + n].reshape(shape).copy())
        pos += n
    net.load_state_dict(state)
    net.eval()
    return LearnedScoreModel(
        Role.GLOBAL if role == 0 else Role.LOCAL,
        NoiseSchedule(smin, smax, n_levels),
        net,
        list(desc["loss_curve"]),
    )
