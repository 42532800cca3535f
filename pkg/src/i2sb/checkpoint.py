"""Binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic b"I2SBCKPT"
    4 bytes   uint32 format version
    4 bytes   uint32 descriptor length L
    L bytes   UTF-8 JSON descriptor (sorted keys)
    rest      float64 parameter payload

The descriptor carries the network architecture, schedule, mode,
parameterization, corruption statistics, step counter, seed and the task the
model was trained on. Parameters are always stored as float64, so loading
reproduces the in-memory network exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointFormatError
from .model import Model
from .net import Network
from .schedule import build_schedule
from .tasks import CorruptionStats

MAGIC = b"I2SBCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sII")


def descriptor(model: Model, task=None) -> dict:
    return {
        "architecture": model.net.architecture(),
        "n_params": model.net.n_params,
        "schedule": model.schedule.descriptor() if model.schedule is not None else None,
        "mode": model.mode,
        "parameterization": model.parameterization,
        "stats": model.stats.as_dict() if model.stats is not None else None,
        "train_steps": int(model.train_steps),
        "seed": model.seed,
        "task": task.descriptor() if task is not None else None,
    }


def to_bytes(model: Model, task=None) -> bytes:
    desc = json.dumps(descriptor(model, task), sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(model.net.params, dtype="<f8").tobytes()
    return _HEADER.pack(MAGIC, VERSION, len(desc)) + desc + payload


def save(model: Model, path, task=None) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model, task))


def from_bytes(blob: bytes) -> tuple[Model, dict]:
    """Parse a checkpoint; returns the model and the raw descriptor.

    Raises:
        CheckpointFormatError: bad magic, unsupported version, truncated data,
            or a parameter count that disagrees with the architecture.
    """
    if len(blob) < _HEADER.size:
        raise CheckpointFormatError("file too short for a checkpoint header")
    magic, version, length = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (this build reads {VERSION})")
    start = _HEADER.size
    if len(blob) < start + length:
        raise CheckpointFormatError("truncated descriptor")
    try:
        desc = json.loads(blob[start : start + length].decode("utf-8"))
        arch = desc["architecture"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"unreadable descriptor: {exc}") from exc
    payload = blob[start + length :]
    if len(payload) % 8:
        raise CheckpointFormatError(f"parameter payload of {len(payload)} bytes is not a whole number of float64 values")
    params = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    try:
        shell = Network(arch["data_dim"], tuple(arch["hidden"]), arch["time_embed_dim"], arch["cond_dim"], arch["activation"])
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"incomplete architecture descriptor: {exc}") from exc
    if params.size != shell.n_params:
        raise CheckpointFormatError(f"architecture needs {shell.n_params} parameters, payload holds {params.size}")
    shell.params = params
    sched = desc.get("schedule")
    stats = desc.get("stats")
    model = Model(
        net=shell,
        mode=desc.get("mode", "i2sb"),
        parameterization=desc.get("parameterization", "eps"),
        stats=CorruptionStats(**stats) if stats else None,
        schedule=build_schedule(**sched) if sched else None,
        train_steps=int(desc.get("train_steps", 0)),
        seed=desc.get("seed"),
    )
    return model, desc


def load(path) -> tuple[Model, dict]:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
