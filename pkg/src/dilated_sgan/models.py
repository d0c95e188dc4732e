"""Declarative fully convolutional generator and discriminator networks.

A network is described by a :class:`NetworkSpec`, an ordered list of
:class:`LayerSpec`, and realised as a :class:`SpecNetwork` torch module. The
default generator upsamples noise with five stride-2 transposed convolutions
and then refines it with five size-preserving dilated convolutions (rates 1
to 5); the default discriminator is five stride-2 convolutions ending in a
one-filter sigmoid map.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ._validation import check_positive_int

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "SpecNetwork",
    "default_generator_spec",
    "default_discriminator_spec",
    "build_network",
    "init_weights",
    "generator_forward",
    "discriminator_forward",
    "receptive_field_bound",
    "sample_noise",
]

LAYER_KINDS = ("deconv", "conv", "dilated_conv")
ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "none")

# Keras-style moving average momentum 0.99 is torch momentum 0.01.
BN_MOMENTUM = 0.01
BN_EPS = 1e-3
INIT_STD = 0.02


@dataclass(frozen=True)
class LayerSpec:
    """One convolutional layer.

    ``batch_norm`` places a batch-normalisation layer on this layer's *input*,
    i.e. between the previous layer and this one. ``stride`` on a ``deconv``
    layer is the upsampling factor of the transposed convolution.
    """

    kind: str
    filters: int
    kernel: tuple = (3, 3)
    stride: int = 1
    dilation: int = 1
    activation: str = "relu"
    leaky_slope: float = 0.2
    batch_norm: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"layer kind must be one of {LAYER_KINDS}, "
                             f"got {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, "
                             f"got {self.activation!r}")
        check_positive_int(self.filters, "filters")
        check_positive_int(self.stride, "stride")
        check_positive_int(self.dilation, "dilation")
        if len(self.kernel) != 2 or any(k < 1 or k % 2 == 0 for k in self.kernel):
            raise ValueError(f"kernel must be two odd sizes, got {self.kernel}")
        if self.dilation > 1 and self.kind != "dilated_conv":
            raise ValueError("dilation > 1 is only allowed on dilated_conv layers")
        if self.kind == "dilated_conv" and self.stride != 1:
            raise ValueError("dilated_conv layers must have stride 1")

    @property
    def padding(self):
        return tuple(self.dilation * (k - 1) // 2 for k in self.kernel)


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list plus input channel count and role."""

    layers: tuple
    input_channels: int = 1
    role: str = "generator"
    output_channels: int = field(init=False)

    def __post_init__(self):
        layers = tuple(l if isinstance(l, LayerSpec) else LayerSpec(**l)
                       for l in self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        check_positive_int(self.input_channels, "input_channels")
        last = layers[-1]
        if self.role == "generator":
            if last.activation != "tanh":
                raise ValueError("the generator's last layer must use tanh")
            if any(l.kind == "conv" and l.stride > 1 for l in layers):
                raise ValueError("generator layers may not downsample")
        elif self.role == "discriminator":
            if last.filters != 1 or last.activation != "sigmoid":
                raise ValueError(
                    "the discriminator's last layer must have 1 filter and sigmoid")
            if any(l.kind == "deconv" for l in layers):
                raise ValueError("discriminator layers may not upsample")
        else:
            raise ValueError(f"role must be 'generator' or 'discriminator', "
                             f"got {self.role!r}")
        object.__setattr__(self, "output_channels", last.filters)

    @property
    def scale(self):
        """Spatial size ratio output/input as a (numerator, denominator) pair."""
        up = int(np.prod([l.stride for l in self.layers if l.kind == "deconv"]))
        down = int(np.prod([l.stride for l in self.layers if l.kind != "deconv"]))
        return up, down

    def to_dict(self):
        return {"role": self.role, "input_channels": self.input_channels,
                "layers": [dict(asdict(l), kernel=list(l.kernel))
                           for l in self.layers]}

    @classmethod
    def from_dict(cls, data):
        return cls(layers=tuple(LayerSpec(**l) for l in data["layers"]),
                   input_channels=data["input_channels"], role=data["role"])


def default_generator_spec(noise_channels=1, image_channels=1, *,
                           deconv_filters=(256, 128, 64, 64, 64),
                           dilated_filters=(64, 64, 64, 64),
                           deconv_kernel=5, dilated_kernel=3,
                           dilation_rates=(1, 2, 3, 4, 5)):
    """Transposed-convolution upsampler followed by a dilated refinement stack.

    Every deconvolution doubles the spatial size. Batch normalisation sits
    between consecutive layers except in front of the last deconvolution and
    in front of the last dilated convolution. All activations are ReLU except
    the final tanh, whose filter count equals `image_channels`.

    The filter counts are free parameters: ``dilated_filters`` lists the
    hidden dilated layers, the last dilated layer always has
    `image_channels` filters.
    """
    check_positive_int(noise_channels, "noise_channels")
    check_positive_int(image_channels, "image_channels")
    deconv_filters = tuple(deconv_filters)
    dilation_rates = tuple(dilation_rates)
    if len(dilated_filters) != len(dilation_rates) - 1:
        raise ValueError("need one hidden dilated filter count per dilation "
                         "rate except the last")
    if not deconv_filters or not dilation_rates:
        raise ValueError("need at least one deconv and one dilated layer")
    layers = []
    n_deconv = len(deconv_filters)
    for i, f in enumerate(deconv_filters):
        layers.append(LayerSpec(
            "deconv", f, (deconv_kernel, deconv_kernel), stride=2,
            activation="relu",
            batch_norm=0 < i < n_deconv - 1))
    filters = tuple(dilated_filters) + (image_channels,)
    for i, (f, rate) in enumerate(zip(filters, dilation_rates)):
        last = i == len(filters) - 1
        layers.append(LayerSpec(
            "dilated_conv", f, (dilated_kernel, dilated_kernel), stride=1,
            dilation=rate, activation="tanh" if last else "relu",
            batch_norm=not last))
    return NetworkSpec(tuple(layers), noise_channels, "generator")


def default_discriminator_spec(image_channels=1, *,
                               filters=(64, 128, 256, 512), kernel=9,
                               leaky_slope=0.2, batch_norm=False):
    """Stride-2 convolutional discriminator ending in a sigmoid map.

    `filters` lists the hidden layers; a final one-filter sigmoid layer is
    appended. With five layers, a 384x384 input yields a 12x12 map.
    """
    check_positive_int(image_channels, "image_channels")
    layers = [LayerSpec("conv", f, (kernel, kernel), stride=2,
                        activation="leaky_relu", leaky_slope=leaky_slope,
                        batch_norm=batch_norm and i > 0)
              for i, f in enumerate(filters)]
    layers.append(LayerSpec("conv", 1, (kernel, kernel), stride=2,
                            activation="sigmoid",
                            batch_norm=batch_norm and bool(filters)))
    return NetworkSpec(tuple(layers), image_channels, "discriminator")


def _activation(layer):
    if layer.activation == "relu":
        return nn.ReLU()
    if layer.activation == "leaky_relu":
        return nn.LeakyReLU(layer.leaky_slope)
    if layer.activation == "tanh":
        return nn.Tanh()
    if layer.activation == "sigmoid":
        return nn.Sigmoid()
    return nn.Identity()


class SpecNetwork(nn.Module):
    """Torch module realising a :class:`NetworkSpec`.

    Parameter names are stable (``layers.<i>.conv.weight`` and so on) so that
    checkpoints can be matched against the spec.
    """

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        blocks = []
        in_ch = spec.input_channels
        for layer in spec.layers:
            block = nn.Module()
            block.norm = (nn.BatchNorm2d(in_ch, eps=BN_EPS, momentum=BN_MOMENTUM)
                          if layer.batch_norm else nn.Identity())
            if layer.kind == "deconv":
                pad = tuple((k - 1) // 2 for k in layer.kernel)
                block.conv = nn.ConvTranspose2d(
                    in_ch, layer.filters, layer.kernel, stride=layer.stride,
                    padding=pad, output_padding=layer.stride - 1)
            else:
                block.conv = nn.Conv2d(
                    in_ch, layer.filters, layer.kernel, stride=layer.stride,
                    padding=layer.padding, dilation=layer.dilation)
            block.act = _activation(layer)
            blocks.append(block)
            in_ch = layer.filters
        self.layers = nn.ModuleList(blocks)

    def forward(self, x):
        if self.spec.role == "discriminator":
            _check_divisible(x.shape[-2:], self.spec.scale[1])
        x = x.contiguous(memory_format=torch.channels_last)
        for block in self.layers:
            x = block.act(block.conv(block.norm(x)))
        return x

    def kernels(self):
        """Convolution kernels, the parameters subject to weight decay."""
        return [block.conv.weight for block in self.layers]


def _check_divisible(hw, factor):
    if any(int(s) % factor for s in hw):
        raise ValueError(
            f"discriminator input size {tuple(int(s) for s in hw)} must be "
            f"divisible by {factor} (the product of its strides)")


def init_weights(spec, seed=0):
    """Fresh weights for `spec`: kernels ~ N(0, 0.02^2), biases 0, BN (1, 0).

    Returns a state dict (``{name: tensor}``) in float32, bitwise
    reproducible for a given seed.
    """
    gen = torch.Generator().manual_seed(int(seed))
    state = {}
    for name, tensor in SpecNetwork(spec).state_dict().items():
        if name.endswith("conv.weight"):
            value = torch.randn(tensor.shape, generator=gen) * INIT_STD
        elif name.endswith("norm.weight") or name.endswith("running_var"):
            value = torch.ones_like(tensor)
        else:
            value = torch.zeros_like(tensor)
        state[name] = value
    return state


def build_network(spec, weights=None, seed=0, dtype=torch.float32):
    """Instantiate a :class:`SpecNetwork`, loading `weights` or fresh ones."""
    net = SpecNetwork(spec)
    if weights is None:
        weights = init_weights(spec, seed)
    try:
        net.load_state_dict(
            {k: torch.as_tensor(np.asarray(v)) if not torch.is_tensor(v) else v
             for k, v in weights.items()})
    except RuntimeError as exc:
        raise ValueError(f"weights do not match the network spec: {exc}") from None
    # NHWC layout is markedly faster for these convolutions on CPU
    return net.to(dtype=dtype, memory_format=torch.channels_last)


def sample_noise(rng, count, height, width, channels=1):
    """Uniform ``[-1, 1]`` noise grids of shape (count, channels, h, w)."""
    check_positive_int(height, "noise height")
    check_positive_int(width, "noise width")
    return rng.uniform(-1.0, 1.0, size=(count, channels, height, width))


def _as_batch(arr, channels, what):
    arr = np.asarray(arr)
    single = arr.ndim < 4
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != channels:
        raise ValueError(f"{what} must have {channels} channel(s), "
                         f"got shape {np.shape(arr)}")
    if 0 in arr.shape:
        raise ValueError(f"{what} is empty")
    return arr, single


def generator_forward(generator, z):
    """Run the generator in inference mode.

    Parameters
    ----------
    generator : SpecNetwork
    z : ndarray
        Noise grid ``(h, w)``, ``(C, h, w)`` or a batch ``(B, C, h, w)`` with
        entries in ``[-1, 1]``.

    Returns
    -------
    TextureImage for a single grid, otherwise an array ``(B, H, W)`` (or
    ``(B, C, H, W)`` for multi-channel outputs) in model space.
    """
    from .data import TextureImage

    z, single = _as_batch(z, generator.spec.input_channels, "noise grid")
    if np.abs(z).max() > 1:
        raise ValueError("noise entries must lie in [-1, 1]")
    dtype = next(generator.parameters()).dtype
    generator.eval()
    with torch.no_grad():
        out = generator(torch.as_tensor(z, dtype=dtype)).numpy().astype(np.float64)
    if out.shape[1] == 1:
        out = out[:, 0]
    if single and out.ndim == 3:
        return TextureImage(np.clip(out[0], -1.0, 1.0))
    return out


def discriminator_forward(discriminator, x):
    """Probability map(s) ``(H/s, W/s)`` for model-space image(s) `x`.

    `x` may be a :class:`~dilated_sgan.data.TextureImage`, a 2D array, or a
    batch ``(B, H, W)`` / ``(B, C, H, W)``.
    """
    from .data import TextureImage

    if isinstance(x, TextureImage):
        x = x.to_model().pixels
    x = np.asarray(x)
    if x.ndim == 3 and discriminator.spec.input_channels == 1:
        x = x[:, None]
    x, single = _as_batch(x, discriminator.spec.input_channels, "image")
    _check_divisible(x.shape[-2:], discriminator.spec.scale[1])
    dtype = next(discriminator.parameters()).dtype
    discriminator.eval()
    with torch.no_grad():
        out = discriminator(torch.as_tensor(x, dtype=dtype))
    out = out[:, 0].numpy().astype(np.float64)
    return out[0] if single else out


def receptive_field_bound(spec):
    """Upper bound (h, w) on the pixel window tied to one network position.

    For a generator this is the footprint, in output pixels, of a single
    input (noise) entry; for a discriminator it is the input window one
    output probability depends on. Both reduce to the usual
    ``1 + dilation * (kernel - 1)`` for a single stride-1 layer.
    """
    bounds = []
    for axis in (0, 1):
        if spec.role == "generator":
            # width of the set of outputs touched by one input position
            width = 1
            for layer in spec.layers:
                k = layer.dilation * (layer.kernel[axis] - 1) + 1
                if layer.kind == "deconv":
                    width = (width - 1) * layer.stride + k
                else:
                    width = width + k - 1
        else:
            width, jump = 1, 1
            for layer in spec.layers:
                k = layer.dilation * (layer.kernel[axis] - 1) + 1
                width += (k - 1) * jump
                jump *= layer.stride
        bounds.append(width)
    return tuple(bounds)
