"""Self-describing binary checkpoint container.

Layout (all integers little-endian)::

    magic        8 bytes   b"DSGANCKP"
    version      u32       FORMAT_VERSION
    meta_len     u64
    meta         meta_len bytes of UTF-8 text, one ``key=value`` per line,
                 keys sorted, values JSON-encoded
    n_arrays     u32
    n_arrays times:
        name_len u16, name (UTF-8)
        dtype_len u8, dtype (numpy dtype string, e.g. "<f4")
        ndim     u8, ndim x u64 shape
        nbytes   u64, raw little-endian C-order data

The metadata holds the two network specs, step and epoch counters, random
generator states, optimizer hyper-parameters and the run configuration
(flattened as ``config.<key>``). Arrays hold network weights and optimizer
moments. Saving, loading and saving again produces identical bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .models import NetworkSpec

__all__ = ["Checkpoint", "CheckpointError", "CheckpointVersionError",
           "save_checkpoint", "load_checkpoint", "FORMAT_VERSION"]

MAGIC = b"DSGANCKP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """The file is not a well-formed checkpoint."""


class CheckpointVersionError(CheckpointError):
    """The file was written by an incompatible format version."""


@dataclass
class Checkpoint:
    generator_spec: NetworkSpec
    discriminator_spec: NetworkSpec
    generator_weights: dict
    discriminator_weights: dict
    optimizer_arrays: dict = field(default_factory=dict)
    optimizer_meta: dict = field(default_factory=dict)
    step: int = 0
    epoch: int = 0
    rng_state: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for spec, weights, what in (
                (self.generator_spec, self.generator_weights, "generator"),
                (self.discriminator_spec, self.discriminator_weights,
                 "discriminator")):
            _check_shapes(spec, weights, what)

    @property
    def identifier(self):
        return f"step-{self.step}"


def _check_shapes(spec, weights, what):
    from .models import SpecNetwork

    expected = {k: tuple(v.shape) for k, v in SpecNetwork(spec).state_dict().items()}
    got = {k: tuple(np.shape(v)) for k, v in weights.items()}
    if expected != got:
        missing = sorted(set(expected) ^ set(got))
        wrong = sorted(k for k in set(expected) & set(got) if expected[k] != got[k])
        raise CheckpointError(
            f"{what} weights do not match its spec "
            f"(missing/unexpected: {missing}, wrong shape: {wrong})")


def _meta_text(ck):
    meta = {
        "generator_spec": ck.generator_spec.to_dict(),
        "discriminator_spec": ck.discriminator_spec.to_dict(),
        "step": ck.step,
        "epoch": ck.epoch,
        "rng_state": ck.rng_state,
        "optimizer_meta": ck.optimizer_meta,
    }
    for key, value in ck.config.items():
        meta[f"config.{key}"] = value
    lines = [f"{k}={json.dumps(meta[k], sort_keys=True, separators=(',', ':'))}"
             for k in sorted(meta)]
    return "\n".join(lines) + "\n"


def _arrays(ck):
    for prefix, group in (("generator/", ck.generator_weights),
                          ("discriminator/", ck.discriminator_weights),
                          ("optimizer/", ck.optimizer_arrays)):
        for name, value in group.items():
            yield prefix + name, np.asarray(value)


def save_checkpoint(ck, path):
    """Write `ck` to `path` in the container format described above."""
    meta = _meta_text(ck).encode("utf-8")
    arrays = list(_arrays(ck))
    chunks = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(meta)), meta,
              struct.pack("<I", len(arrays))]
    for name, arr in arrays:
        arr = np.asarray(arr, dtype=arr.dtype.newbyteorder("<"), order="C")
        bname = name.encode("utf-8")
        bdtype = arr.dtype.str.encode("ascii")
        chunks += [struct.pack("<H", len(bname)), bname,
                   struct.pack("<B", len(bdtype)), bdtype,
                   struct.pack("<B", arr.ndim),
                   struct.pack(f"<{arr.ndim}Q", *arr.shape),
                   struct.pack("<Q", arr.nbytes), arr.tobytes()]
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path} has checkpoint format version {version}, "
            f"this build reads version {FORMAT_VERSION}")
    (meta_len,) = reader.unpack("<Q")
    try:
        meta = {}
        for line in reader.take(meta_len).decode("utf-8").splitlines():
            key, _, value = line.partition("=")
            meta[key] = json.loads(value)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None

    groups = {"generator": {}, "discriminator": {}, "optimizer": {}}
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (nlen,) = reader.unpack("<H")
        name = reader.take(nlen).decode("utf-8")
        (dlen,) = reader.unpack("<B")
        dtype = np.dtype(reader.take(dlen).decode("ascii"))
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}Q")
        (nbytes,) = reader.unpack("<Q")
        arr = np.frombuffer(reader.take(nbytes), dtype=dtype)
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"array {name!r} has inconsistent size")
        group, _, key = name.partition("/")
        if group not in groups:
            raise CheckpointError(f"unknown array group in {name!r}")
        groups[group][key] = arr.reshape(shape).copy()
    if reader.pos != len(reader.data):
        raise CheckpointError("trailing bytes after the last array")

    try:
        config = {k[len("config."):]: v for k, v in meta.items()
                  if k.startswith("config.")}
        return Checkpoint(
            generator_spec=NetworkSpec.from_dict(meta["generator_spec"]),
            discriminator_spec=NetworkSpec.from_dict(meta["discriminator_spec"]),
            generator_weights=groups["generator"],
            discriminator_weights=groups["discriminator"],
            optimizer_arrays=groups["optimizer"],
            optimizer_meta=meta["optimizer_meta"],
            step=meta["step"], epoch=meta["epoch"],
            rng_state=meta["rng_state"], config=config)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint metadata lacks {exc}") from None
