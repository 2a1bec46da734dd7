"""
Versioned binary checkpoints for the diffusion-bridge model: schedule,
standardization constants, and both networks' parameter tensors.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsb import DiffusionSchedule, DsbModel, MeanNet

MAGIC = b"SWDC"
VERSION = 1
_PARAM_ORDER = ["W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4"]


class CheckpointError(Exception):
    pass


def _write_net(fh, net: MeanNet) -> None:
    for name in _PARAM_ORDER:
        arr = np.ascontiguousarray(net.params[name], dtype="<f8")
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def save_model(path: str | Path, model: DsbModel) -> None:
    with open(path, "wb") as fh:
        g = model.schedule.gamma
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", g.size))
        fh.write(np.ascontiguousarray(g, dtype="<f8").tobytes())
        fh.write(struct.pack("<dd", model.data_mean, model.data_std))
        fh.write(struct.pack("<BI", int(model.forward_trained), model.round_index))
        net = model.backward_net
        fh.write(struct.pack("<III", net.dim, net.hidden, net.emb_dim))
        _write_net(fh, model.forward_net)
        _write_net(fh, model.backward_net)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        out = struct.unpack_from(fmt, self.raw, self.off)
        self.off += size
        return out

    def array(self, count: int) -> np.ndarray:
        size = count * 8
        if self.off + size > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        out = np.frombuffer(self.raw, dtype="<f8", count=count, offset=self.off)
        self.off += size
        return out.astype(np.float64)


def _read_net(r: _Reader, dim: int, hidden: int, emb_dim: int) -> MeanNet:
    net = object.__new__(MeanNet)
    net.dim, net.hidden, net.emb_dim = dim, hidden, emb_dim
    net.params = {}
    for name in _PARAM_ORDER:
        (ndim,) = r.take("<I")
        shape = r.take(f"<{ndim}I")
        net.params[name] = r.array(int(np.prod(shape))).reshape(shape)
    net.velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    return net


def load_model(path: str | Path) -> DsbModel:
    raw = Path(path).read_bytes()
    r = _Reader(raw)
    (magic,) = r.take("<4s")
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    (version,) = r.take("<H")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (k,) = r.take("<I")
    schedule = DiffusionSchedule(gamma=r.array(k))
    mean, std = r.take("<dd")
    fwd_trained, round_index = r.take("<BI")
    dim, hidden, emb_dim = r.take("<III")
    forward_net = _read_net(r, dim, hidden, emb_dim)
    backward_net = _read_net(r, dim, hidden, emb_dim)
    return DsbModel(
        forward_net=forward_net,
        backward_net=backward_net,
        schedule=schedule,
        data_mean=mean,
        data_std=std,
        forward_trained=bool(fwd_trained),
        round_index=round_index,
    )
