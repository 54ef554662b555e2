"""Binary checkpoint format.

Layout (all integers little-endian uint32, floats little-endian float64)::

    b"RQCKPT" | version | network count
    per network:
        role length | role (utf-8) | number of dims | dims...
        per layer: weights row-major (fan_in x fan_out), then biases

Hidden layers are tanh; the output activation follows from the role
(critics are linear, policies tanh).
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict

import numpy as np

from .nn import MlpParams

MAGIC = b"RQCKPT"
VERSION = 1
ROLES = (
    "actor",
    "adversary",
    "critic",
    "actor_target",
    "adversary_target",
    "critic_target",
)


class CheckpointError(Exception):
    """Base class for unreadable checkpoint files."""


class TruncatedCheckpointError(CheckpointError):
    pass


class MagicMismatchError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    def __init__(self, found: int, expected: int = VERSION):
        super().__init__(f"checkpoint format version {found}, this build reads version {expected}")
        self.found = found
        self.expected = expected


def output_activation_for(role: str) -> str:
    return "linear" if role.startswith("critic") else "tanh"


def dumps(networks: Dict[str, MlpParams]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(networks))]
    for role, net in networks.items():
        if role not in ROLES:
            raise ValueError(f"unknown network role {role!r}")
        tag = role.encode("utf-8")
        parts.append(struct.pack("<I", len(tag)) + tag)
        parts.append(struct.pack(f"<I{len(net.layer_dims)}I", len(net.layer_dims), *net.layer_dims))
        for w, b in zip(net.weights, net.biases):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def uint(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float).reshape(shape)


def loads(data: bytes) -> Dict[str, MlpParams]:
    reader = _Reader(data)
    if len(data) < len(MAGIC):
        raise TruncatedCheckpointError("checkpoint truncated inside the magic header")
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise MagicMismatchError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = reader.uint()
    if version != VERSION:
        raise VersionMismatchError(version)
    count = reader.uint()
    networks = {}
    for _ in range(count):
        role = reader.take(reader.uint()).decode("utf-8", errors="replace")
        if role not in ROLES:
            raise CheckpointError(f"unknown network role {role!r}")
        dims = tuple(reader.uint() for _ in range(reader.uint()))
        if len(dims) < 2:
            raise CheckpointError(f"network {role!r} has degenerate dims {dims}")
        weights, biases = [], []
        for i in range(len(dims) - 1):
            weights.append(reader.floats((dims[i], dims[i + 1])))
            biases.append(reader.floats((dims[i + 1],)))
        networks[role] = MlpParams(dims, weights, biases, "tanh", output_activation_for(role))
    if reader.pos != len(data):
        raise CheckpointError(f"{len(data) - reader.pos} trailing bytes after last network")
    return networks


def save(path, networks: Dict[str, MlpParams]) -> None:
    Path(path).write_bytes(dumps(networks))


def load(path) -> Dict[str, MlpParams]:
    return loads(Path(path).read_bytes())
