"""Spatially averaged adversarial losses and the alternating training loop."""
from __future__ import annotations

import copy
import csv
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from ._validation import (
    check_positive_float,
    check_positive_int,
    check_random_state,
)
from .checkpoint import Checkpoint, save_checkpoint
from .data import PatchSampler, TextureImage, save_png
from .models import build_network, sample_noise

__all__ = [
    "EPS",
    "TrainConfig",
    "TrainLogRecord",
    "TrainingDiverged",
    "loss_discriminator",
    "loss_generator",
    "l2_penalty",
    "train",
    "generate",
    "make_checkpoint",
    "sample_sheet",
]

logger = logging.getLogger(__name__)

EPS = 1e-7
LOG_COLUMNS = ("step", "epoch", "loss_G", "loss_D", "d_real", "d_fake",
               "wall_time")


def _as_tensor(x):
    if torch.is_tensor(x):
        return x, False
    return torch.as_tensor(np.asarray(x, dtype=np.float64)), True


def loss_discriminator(d_real, d_fake, eps=EPS):
    """Binary cross-entropy of the discriminator, averaged over map and batch.

    ``-(mean log D(x) + mean log(1 - D(G(z))))`` with probabilities clamped
    to ``[eps, 1 - eps]``. Accepts tensors (differentiable) or arrays
    (returns a float).
    """
    real, was_array = _as_tensor(d_real)
    fake, _ = _as_tensor(d_fake)
    real = real.clamp(eps, 1 - eps)
    fake = fake.clamp(eps, 1 - eps)
    loss = -(torch.log(real).mean() + torch.log1p(-fake).mean())
    return float(loss) if was_array else loss


def loss_generator(d_fake, eps=EPS):
    """Non-saturating generator loss ``-mean log D(G(z))``."""
    fake, was_array = _as_tensor(d_fake)
    loss = -torch.log(fake.clamp(eps, 1 - eps)).mean()
    return float(loss) if was_array else loss


def l2_penalty(weights, lam):
    """``lam`` times the sum of squared convolution-kernel entries.

    `weights` is a network (its :meth:`kernels` are used), or an iterable of
    kernel tensors/arrays. Biases and normalisation parameters never enter.
    """
    lam = check_positive_float(lam, "l2 lambda", allow_zero=True)
    kernels = weights.kernels() if hasattr(weights, "kernels") else list(weights)
    if not kernels:
        return 0.0
    as_tensors = [k if torch.is_tensor(k) else torch.as_tensor(np.asarray(k, float))
                  for k in kernels]
    total = sum((k ** 2).sum() for k in as_tensors)
    return lam * total if any(torch.is_tensor(k) for k in kernels) else float(lam * total)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    beta1: float = 0.5
    beta2: float = 0.999
    l2_lambda: float = 1e-5
    batch_size: int = 8
    epochs: int = 100
    minibatches_per_epoch: int = 100
    d_steps_per_g_step: int = 1
    seed: int = 0
    checkpoint_every: int = 10
    sample_every: int = 10

    def __post_init__(self):
        check_positive_float(self.learning_rate, "learning_rate")
        check_positive_float(self.l2_lambda, "l2_lambda", allow_zero=True)
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ValueError(f"{name} must be in [0, 1), got {value}")
        for name in ("batch_size", "epochs", "minibatches_per_epoch",
                     "d_steps_per_g_step", "checkpoint_every", "sample_every"):
            check_positive_int(getattr(self, name), name)
        check_positive_int(self.seed, "seed", minimum=0)

    @property
    def total_steps(self):
        return self.epochs * self.minibatches_per_epoch

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class TrainLogRecord:
    step: int
    epoch: int
    loss_G: float
    loss_D: float
    d_real: float
    d_fake: float
    wall_time: float


class TrainingDiverged(RuntimeError):
    """A loss became NaN or infinite; carries the last good checkpoint."""

    def __init__(self, message, checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


def _adam(net, config):
    return torch.optim.Adam(net.parameters(), lr=config.learning_rate,
                            betas=(config.beta1, config.beta2))


def _optimizer_to_arrays(prefix, opt, arrays, meta):
    state = opt.state_dict()
    meta[prefix] = state["param_groups"]
    for idx, entry in state["state"].items():
        for key, value in entry.items():
            arrays[f"{prefix}.{idx}.{key}"] = value.detach().cpu().numpy().copy()


def _optimizer_from_arrays(prefix, opt, arrays, meta):
    state = {}
    for name, value in arrays.items():
        group, idx, key = name.split(".")
        if group == prefix:
            state.setdefault(int(idx), {})[key] = torch.as_tensor(value.copy())
    if prefix in meta:
        opt.load_state_dict({"state": state, "param_groups": meta[prefix]})


def _to_numpy_weights(net):
    return {k: v.detach().cpu().numpy().copy() for k, v in net.state_dict().items()}


def make_checkpoint(generator, discriminator, *, opt_g=None, opt_d=None,
                    step=0, epoch=0, rng_state=None, config=None):
    """Snapshot networks (and optionally optimizers) into a :class:`Checkpoint`."""
    arrays, meta = {}, {}
    if opt_g is not None:
        _optimizer_to_arrays("g", opt_g, arrays, meta)
    if opt_d is not None:
        _optimizer_to_arrays("d", opt_d, arrays, meta)
    return Checkpoint(
        generator_spec=generator.spec,
        discriminator_spec=discriminator.spec,
        generator_weights=_to_numpy_weights(generator),
        discriminator_weights=_to_numpy_weights(discriminator),
        optimizer_arrays=arrays, optimizer_meta=meta,
        step=step, epoch=epoch, rng_state=copy.deepcopy(rng_state or {}),
        config=dict(config or {}))


def sample_sheet(images, path, columns=4, gap=2):
    """Tile model-space images (B, H, W) into a single PNG grid."""
    images = np.asarray(images)
    n, h, w = images.shape
    cols = min(columns, n)
    rows = math.ceil(n / cols)
    sheet = np.ones((rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap))
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        sheet[r * (h + gap):r * (h + gap) + h, c * (w + gap):c * (w + gap) + w] = img
    save_png(np.clip(sheet, -1, 1), path)


def _noise_shape(generator, patch_size):
    up, down = generator.spec.scale
    if (patch_size * down) % up:
        raise ValueError(f"patch size {patch_size} is not a multiple of the "
                         f"generator upsampling factor {up // down}")
    n = patch_size * down // up
    return n, n


def train(config, sampler, generator, discriminator, *, out_dir=None,
          resume=None, run_config=None, callback=None):
    """Alternating adversarial training.

    Each iteration performs ``d_steps_per_g_step`` discriminator updates
    followed by one generator update, each with Adam and an L2 penalty on
    the convolution kernels. Real batches come from `sampler`; noise grids
    are sized so the generator output matches the patch size.

    Parameters
    ----------
    config : TrainConfig
    sampler : PatchSampler
    generator, discriminator : SpecNetwork
        Trained in place.
    out_dir : str, optional
        If given, receives ``train_log.csv`` (appended every iteration),
        ``checkpoint_epoch<k>.ckpt`` and ``samples_epoch<k>.png`` on the
        configured schedules.
    resume : Checkpoint, optional
        Continue from this state (weights, optimizers, counters, RNGs).
    run_config : dict, optional
        Extra configuration recorded in every checkpoint.
    callback : callable, optional
        Called with each :class:`TrainLogRecord`.

    Returns
    -------
    checkpoint : Checkpoint
        Final state.
    log : list of TrainLogRecord
    """
    if not isinstance(config, TrainConfig):
        raise TypeError("config must be a TrainConfig")
    patch = sampler.patch_size
    noise_hw = _noise_shape(generator, patch)
    if patch % discriminator.spec.scale[1]:
        raise ValueError(f"patch size {patch} must be divisible by "
                         f"{discriminator.spec.scale[1]} for the discriminator")
    if generator.spec.output_channels != discriminator.spec.input_channels:
        raise ValueError("generator output channels do not match the "
                         "discriminator input channels")

    torch.manual_seed(config.seed)
    rng = check_random_state(config.seed)
    opt_g, opt_d = _adam(generator, config), _adam(discriminator, config)
    step = 0
    snapshot_config = dict(run_config or {}, **{
        f"train.{k}": v for k, v in config.to_dict().items()})
    if resume is not None:
        generator.load_state_dict({k: torch.as_tensor(v) for k, v in
                                   resume.generator_weights.items()})
        discriminator.load_state_dict({k: torch.as_tensor(v) for k, v in
                                       resume.discriminator_weights.items()})
        _optimizer_from_arrays("g", opt_g, resume.optimizer_arrays,
                               resume.optimizer_meta)
        _optimizer_from_arrays("d", opt_d, resume.optimizer_arrays,
                               resume.optimizer_meta)
        step = resume.step
        if "noise" in resume.rng_state:
            rng.bit_generator.state = resume.rng_state["noise"]
        if "sampler" in resume.rng_state:
            sampler.set_state(resume.rng_state["sampler"])

    preview_z = sample_noise(np.random.default_rng(config.seed + 1),
                             min(config.batch_size, 8), *noise_hw,
                             generator.spec.input_channels)
    dtype = next(generator.parameters()).dtype

    def checkpoint_now(at_step):
        return make_checkpoint(
            generator, discriminator, opt_g=opt_g, opt_d=opt_d, step=at_step,
            epoch=at_step // config.minibatches_per_epoch,
            rng_state={"noise": rng.bit_generator.state,
                       "sampler": sampler.get_state()},
            config=snapshot_config)

    log_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "train_log.csv")
        fresh = not os.path.exists(log_path) or resume is None
        log_file = open(log_path, "w" if fresh else "a", newline="")
        writer = csv.writer(log_file)
        if fresh:
            writer.writerow(LOG_COLUMNS)

    last_good = checkpoint_now(step)
    log = []
    start = time.perf_counter()
    try:
        while step < config.total_steps:
            generator.train()
            discriminator.train()
            for _ in range(config.d_steps_per_g_step):
                real = torch.as_tensor(
                    np.stack([sampler.sample().pixels
                              for _ in range(config.batch_size)])[:, None],
                    dtype=dtype)
                z = torch.as_tensor(sample_noise(
                    rng, config.batch_size, *noise_hw,
                    generator.spec.input_channels), dtype=dtype)
                with torch.no_grad():
                    fake = generator(z)
                d_real = discriminator(real)
                d_fake = discriminator(fake)
                loss_d = (loss_discriminator(d_real, d_fake)
                          + l2_penalty(discriminator, config.l2_lambda))
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()

            z = torch.as_tensor(sample_noise(
                rng, config.batch_size, *noise_hw,
                generator.spec.input_channels), dtype=dtype)
            loss_g = (loss_generator(discriminator(generator(z)))
                      + l2_penalty(generator, config.l2_lambda))
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()
            step += 1

            record = TrainLogRecord(
                step=step, epoch=(step - 1) // config.minibatches_per_epoch + 1,
                loss_G=loss_g.item(), loss_D=loss_d.item(),
                d_real=d_real.mean().item(), d_fake=d_fake.mean().item(),
                wall_time=time.perf_counter() - start)
            if not (math.isfinite(record.loss_G) and math.isfinite(record.loss_D)):
                if out_dir is not None:
                    save_checkpoint(last_good,
                                    os.path.join(out_dir, "last_good.ckpt"))
                raise TrainingDiverged(
                    f"non-finite loss at step {step}: loss_G={record.loss_G}, "
                    f"loss_D={record.loss_D}, mean D(real)={record.d_real}, "
                    f"mean D(fake)={record.d_fake}", last_good)
            log.append(record)
            if log_file is not None:
                writer.writerow([getattr(record, c) for c in LOG_COLUMNS])
            if callback is not None:
                callback(record)

            if step % config.minibatches_per_epoch == 0:
                epoch = step // config.minibatches_per_epoch
                last_good = checkpoint_now(step)
                logger.info("epoch %d: loss_G=%.4f loss_D=%.4f", epoch,
                            record.loss_G, record.loss_D)
                if out_dir is not None:
                    log_file.flush()
                    if epoch % config.checkpoint_every == 0 or step == config.total_steps:
                        save_checkpoint(last_good, os.path.join(
                            out_dir, f"checkpoint_epoch{epoch:04d}.ckpt"))
                    if epoch % config.sample_every == 0 or step == config.total_steps:
                        generator.eval()
                        with torch.no_grad():
                            preview = generator(torch.as_tensor(preview_z, dtype=dtype))
                        sample_sheet(preview[:, 0].double().numpy(), os.path.join(
                            out_dir, f"samples_epoch{epoch:04d}.png"))
    finally:
        if log_file is not None:
            log_file.close()
    generator.eval()
    discriminator.eval()
    return checkpoint_now(step), log


def generate(checkpoint, noise_height, noise_width, count, seed=None, *,
             chunk=8):
    """Draw `count` images from the generator stored in `checkpoint`.

    Noise is uniform on ``[-1, 1]``; the result is deterministic for a given
    seed. Images are ``s*noise_height x s*noise_width`` for the generator's
    upsampling factor ``s``.
    """
    check_positive_int(count, "count")
    net = build_network(checkpoint.generator_spec, checkpoint.generator_weights)
    net.eval()
    rng = check_random_state(seed)
    z = sample_noise(rng, count, noise_height, noise_width,
                     checkpoint.generator_spec.input_channels)
    images = []
    with torch.no_grad():
        for start in range(0, count, chunk):
            out = net(torch.as_tensor(z[start:start + chunk], dtype=torch.float32))
            for img in out[:, 0].double().numpy():
                images.append(TextureImage(np.clip(img, -1.0, 1.0)))
    return images
