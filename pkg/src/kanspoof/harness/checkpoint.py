"""Binary checkpoint format.

Little-endian layout::

    b"SSDK" | u32 version
    u32 n | n bytes UTF-8 config text | 32 bytes sha256(config text)
    u32 epoch | f64 dev loss
    u32 n_arrays, then per array:
        u32 n | n bytes UTF-8 name | u32 ndim | u64 * ndim shape | f64 * prod(shape)

Score-averaging ensembles store their member parameters under
``member.<j>.<name>``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, KanSpoofError
from ..model import SsdModel
from . import config as cfgio
from .training import TrainConfig

MAGIC = b"SSDK"
VERSION = 1
MEMBER_PREFIX = "member."


@dataclass
class Checkpoint:
    config: TrainConfig
    arrays: dict
    epoch: int = 0
    dev_loss: float = float("nan")
    members: list = field(default_factory=list)

    @classmethod
    def from_model(cls, model: SsdModel, config: TrainConfig, epoch=0, dev_loss=float("nan"), members=None):
        return cls(config, model.state_dict(), int(epoch), float(dev_loss), list(members or []))

    def build_model(self):
        model = SsdModel(self.config.model)
        try:
            model.load_state_dict(self.arrays)
        except (KeyError, KanSpoofError) as exc:
            raise CheckpointError(str(exc), "arrays") from None
        return model


def _pack_str(text):
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps(ckpt: Checkpoint) -> bytes:
    config_text = cfgio.dumps(ckpt.config)
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(config_text)]
    parts.append(hashlib.sha256(config_text.encode("utf-8")).digest())
    parts.append(struct.pack("<Id", ckpt.epoch, ckpt.dev_loss))
    named = list(ckpt.arrays.items())
    for j, state in enumerate(ckpt.members):
        named.extend((f"{MEMBER_PREFIX}{j}.{name}", value) for name, value in state.items())
    parts.append(struct.pack("<I", len(named)))
    for name, value in named:
        value = np.ascontiguousarray(value, dtype="<f8")
        parts.append(_pack_str(name))
        parts.append(struct.pack(f"<I{value.ndim}Q", value.ndim, *value.shape))
        parts.append(value.tobytes())
    return b"".join(parts)


def save_checkpoint(path, ckpt: Checkpoint):
    Path(path).write_bytes(dumps(ckpt))
    return Path(path)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"file truncated while reading {what}", what)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def string(self, what):
        (n,) = self.unpack("<I", what)
        try:
            return bytes(self.take(n, what)).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("invalid UTF-8", what) from None


def loads(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if bytes(r.take(4, "magic")) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)", "magic")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})", "version")
    config_text = r.string("config")
    digest = bytes(r.take(32, "digest"))
    if hashlib.sha256(config_text.encode("utf-8")).digest() != digest:
        raise CheckpointError("config digest mismatch", "digest")
    try:
        config = cfgio.loads(config_text, TrainConfig)
    except KanSpoofError as exc:
        raise CheckpointError(str(exc), "config") from None
    epoch, dev_loss = r.unpack("<Id", "metadata")
    (count,) = r.unpack("<I", "arrays")
    arrays, members = {}, {}
    for _ in range(count):
        name = r.string("arrays")
        (ndim,) = r.unpack("<I", "arrays")
        shape = r.unpack(f"<{ndim}Q", "arrays")
        size = int(np.prod(shape, dtype=np.int64))
        value = np.frombuffer(r.take(8 * size, "arrays"), dtype="<f8").reshape(shape).astype(np.float64)
        if name.startswith(MEMBER_PREFIX):
            index, _, inner = name[len(MEMBER_PREFIX) :].partition(".")
            target = members.setdefault(int(index), {})
        else:
            target, inner = arrays, name
        if inner in target:
            raise CheckpointError(f"parameter {name!r} appears twice", "arrays")
        target[inner] = value
    if r.pos != len(r.data):
        raise CheckpointError(f"{len(r.data) - r.pos} trailing bytes", "arrays")
    ckpt = Checkpoint(config, arrays, epoch, dev_loss, [members[j] for j in sorted(members)])
    expected = set(SsdModel(config.model).state_dict())
    for j, state in enumerate([arrays] + ckpt.members):
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            where = "arrays" if j == 0 else f"member {j - 1}"
            raise CheckpointError(f"{where}: missing {missing[:3]}, unexpected {extra[:3]}", "arrays")
    return ckpt


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path} does not exist", "path")
    return loads(path.read_bytes())
