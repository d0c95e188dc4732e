"""Source images, patch sampling and procedural toy textures.

Pixel values live in one of two spaces: *storage* space ``[0, 1]`` (what is
read from and written to 8-bit PNG files) and *model* space ``[-1, 1]`` (what
the networks consume and produce). The two are related by
``storage = (model + 1) / 2``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ._validation import (
    MODEL,
    STORAGE,
    check_image_array,
    check_positive_int,
    check_random_state,
    check_value_space,
)

__all__ = [
    "SourceImage",
    "TextureImage",
    "PatchSampler",
    "to_model_space",
    "to_storage_space",
    "load_source",
    "load_texture",
    "save_png",
    "make_toy_texture",
    "batch_iterator",
]


def to_model_space(storage):
    """Map ``[0, 1]`` values to ``[-1, 1]``."""
    return 2.0 * np.asarray(storage, dtype=np.float64) - 1.0


def to_storage_space(model):
    """Map ``[-1, 1]`` values to ``[0, 1]``."""
    return (np.asarray(model, dtype=np.float64) + 1.0) / 2.0


@dataclass(frozen=True)
class SourceImage:
    """Large grayscale image that training patches are cut from.

    Parameters
    ----------
    pixels : ndarray of shape (height, width)
        Intensities in ``[0, 1]``.
    facies_count : int
        Number of discrete classes (2 for binary channel models).
    """

    pixels: np.ndarray
    facies_count: int = 2

    def __post_init__(self):
        arr = check_image_array(self.pixels, STORAGE, name="source pixels")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)
        check_positive_int(self.facies_count, "facies_count")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class TextureImage:
    """A single-channel image tagged with the value space it lives in."""

    pixels: np.ndarray
    value_space: str = MODEL
    channels: int = 1

    def __post_init__(self):
        check_value_space(self.value_space)
        if self.channels != 1:
            raise ValueError("only single-channel textures are supported")
        object.__setattr__(
            self, "pixels", check_image_array(self.pixels, self.value_space))

    @property
    def shape(self):
        return self.pixels.shape

    def to_model(self):
        if self.value_space == MODEL:
            return self
        return TextureImage(to_model_space(self.pixels), MODEL)

    def to_storage(self):
        if self.value_space == STORAGE:
            return self
        # clip guards against 1 ulp overshoot of (v + 1) / 2
        return TextureImage(np.clip(to_storage_space(self.pixels), 0, 1), STORAGE)


def as_texture(img, value_space=MODEL):
    """Wrap a bare array as a :class:`TextureImage`; pass textures through."""
    if isinstance(img, TextureImage):
        return img
    if isinstance(img, SourceImage):
        return TextureImage(img.pixels, STORAGE)
    return TextureImage(img, value_space)


def _read_grayscale(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(
                f"{path}: expected an 8-bit grayscale image (PIL mode 'L'), "
                f"got mode {im.mode!r}")
        return np.asarray(im, dtype=np.uint8)


def load_source(path, facies_count=2):
    """Read an 8-bit grayscale raster as a :class:`SourceImage` (``v / 255``)."""
    raw = _read_grayscale(path)
    return SourceImage(raw.astype(np.float64) / 255.0, facies_count)


def load_texture(path):
    """Read an 8-bit grayscale raster as a storage-space :class:`TextureImage`."""
    return TextureImage(_read_grayscale(path).astype(np.float64) / 255.0, STORAGE)


def save_png(img, path, value_space=MODEL):
    """Write an image as 8-bit grayscale PNG.

    Bare arrays are interpreted in `value_space`; textures and source images
    carry their own.
    """
    tex = as_texture(img, value_space).to_storage()
    raw = np.round(tex.pixels * 255.0).astype(np.uint8)
    Image.fromarray(raw, mode="L").save(path, format="PNG")


class PatchSampler:
    """Draw square windows from a source image, uniformly over valid corners.

    Sampling is with replacement. Two samplers built with the same seed emit
    the same sequence of patches.

    Parameters
    ----------
    source : SourceImage
    patch_size : int, default=384
    rng_seed : int or None
    """

    def __init__(self, source, patch_size=384, rng_seed=None):
        if not isinstance(source, SourceImage):
            source = SourceImage(source)
        self.source = source
        self.patch_size = check_positive_int(patch_size, "patch_size")
        if patch_size > source.height or patch_size > source.width:
            raise ValueError(
                f"patch_size {patch_size} exceeds the source image "
                f"({source.height}x{source.width})")
        self.rng_seed = rng_seed
        self._rng = check_random_state(rng_seed)
        self.last_corner = None

    def draw_corner(self):
        p = self.patch_size
        row = int(self._rng.integers(0, self.source.height - p + 1))
        col = int(self._rng.integers(0, self.source.width - p + 1))
        return row, col

    def sample(self):
        """Return the next patch as a model-space :class:`TextureImage`."""
        row, col = self.draw_corner()
        self.last_corner = (row, col)
        p = self.patch_size
        window = self.source.pixels[row:row + p, col:col + p]
        return TextureImage(to_model_space(window), MODEL)

    def get_state(self):
        return self._rng.bit_generator.state

    def set_state(self, state):
        self._rng.bit_generator.state = state


def batch_iterator(sampler, batch_size):
    """Yield an endless stream of ``(batch_size, P, P)`` model-space arrays."""
    check_positive_int(batch_size, "batch_size")
    while True:
        yield np.stack([sampler.sample().pixels for _ in range(batch_size)])


def make_toy_texture(kind, height, width, params=None, seed=None):
    """Procedurally generate a binary ergodic texture.

    Parameters
    ----------
    kind : {"stripes", "channels"}
        ``stripes`` draws periodic bands; the band starting at index 0 is
        foreground (1). ``channels`` draws meandering random-walk bands of
        foreground on a background of 0, wrapping around the image so the
        statistics do not depend on position.
    height, width : int
        At least 16.
    params : dict, optional
        stripes: ``band_width`` (default 4), ``orientation``
        ("vertical" or "horizontal").
        channels: ``channel_width`` (default 12), ``coverage`` (target
        foreground fraction, default 0.3), ``persistence`` and ``meander``
        (AR(1) coefficient and noise scale of the centre-line slope).
    seed : int, optional

    Returns
    -------
    SourceImage
    """
    height = check_positive_int(height, "height", minimum=16)
    width = check_positive_int(width, "width", minimum=16)
    params = dict(params or {})
    builders = {"stripes": lambda: _stripes(height, width, **params),
                "channels": lambda: _channels(
                    height, width, check_random_state(seed), **params)}
    if kind not in builders:
        raise ValueError(f"unknown toy texture kind {kind!r}")
    try:
        pixels = builders[kind]()
    except TypeError as exc:
        raise ValueError(f"invalid parameters for {kind!r}: {exc}") from None
    return SourceImage(pixels, facies_count=2)


def _stripes(height, width, band_width=4, orientation="vertical"):
    if band_width <= 0:
        raise ValueError(f"band_width must be > 0, got {band_width}")
    if orientation == "vertical":
        idx = np.arange(width)
        row = ((idx // band_width) % 2 == 0).astype(np.float64)
        return np.broadcast_to(row, (height, width)).copy()
    if orientation == "horizontal":
        idx = np.arange(height)
        col = ((idx // band_width) % 2 == 0).astype(np.float64)
        return np.broadcast_to(col[:, None], (height, width)).copy()
    raise ValueError(f"orientation must be 'vertical' or 'horizontal', "
                     f"got {orientation!r}")


def _channels(height, width, rng, channel_width=12.0, coverage=0.3,
              persistence=0.97, meander=0.08):
    if channel_width <= 0:
        raise ValueError(f"channel_width must be > 0, got {channel_width}")
    if not 0 < coverage < 1:
        raise ValueError(f"coverage must be in (0, 1), got {coverage}")
    if not 0 <= persistence < 1:
        raise ValueError(f"persistence must be in [0, 1), got {persistence}")
    pixels = np.zeros((height, width))
    # overlapping channels eat some of the target coverage, hence the log
    n_channels = max(1, int(round(
        -np.log1p(-coverage) * height / channel_width)))
    half = channel_width / 2.0
    offsets = np.arange(-int(np.ceil(half)), int(np.ceil(half)) + 1)
    cols = np.arange(width)
    for _ in range(n_channels):
        slope = np.empty(width)
        s = rng.normal(0.0, meander / np.sqrt(1 - persistence ** 2))
        noise = rng.normal(0.0, meander, size=width)
        for x in range(width):
            s = persistence * s + noise[x]
            slope[x] = s
        centre = rng.uniform(0, height) + np.cumsum(slope)
        local_half = half * np.exp(rng.normal(0.0, 0.1))
        rows = np.floor(centre)[None, :] + offsets[:, None]
        inside = np.abs(rows + 0.5 - centre[None, :]) <= local_half
        rr = rows.astype(np.int64) % height
        cc = np.broadcast_to(cols, rr.shape)
        pixels[rr[inside], cc[inside]] = 1.0
    return pixels
