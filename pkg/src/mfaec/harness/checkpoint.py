"""Binary checkpoint format.

Layout: ``b"MFAEC"``, format version (uint16 LE), header length (uint32 LE),
a UTF-8 JSON header (model config, mode, step, RNG state, tensor names and
shapes), then every tensor as little-endian float64 in header order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from ..model import ModelConfig, is_aux, param_shapes

MAGIC = b"MFAEC"
VERSION = 1
_PREFIX = struct.Struct("<5sHI")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    mode: str
    params: dict[str, np.ndarray]
    step: int = 0
    rng_state: dict | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_params(cls, params: dict[str, Tensor], config, mode, step=0, rng_state=None, meta=None):
        return cls(config, mode, {k: v.data.copy() for k, v in params.items()}, step,
                   rng_state, dict(meta or {}))

    def to_params(self) -> dict[str, Tensor]:
        return {k: Tensor(v.copy(), requires_grad=True) for k, v in self.params.items()}

    def stripped(self) -> "Checkpoint":
        """Copy without the error-detection/correction head tensors."""
        kept = {k: v for k, v in self.params.items() if not is_aux(k)}
        return Checkpoint(self.config, self.mode, kept, self.step, self.rng_state, dict(self.meta))

    @property
    def has_aux(self) -> bool:
        return any(is_aux(k) for k in self.params)


def to_bytes(ckpt: Checkpoint) -> bytes:
    order = [n for n in param_shapes(ckpt.config, ckpt.mode) if n in ckpt.params]
    unknown = set(ckpt.params) - set(order)
    if unknown:
        raise CheckpointError(f"unknown tensor names {sorted(unknown)}")
    header = {
        "config": ckpt.config.to_dict(),
        "mode": ckpt.mode,
        "step": ckpt.step,
        "rng_state": ckpt.rng_state,
        "meta": ckpt.meta,
        "tensors": [[n, list(ckpt.params[n].shape)] for n in order],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(ckpt.params[n], dtype="<f8").tobytes() for n in order]
    return b"".join(parts)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def from_bytes(raw: bytes, strip_aux: bool = False) -> Checkpoint:
    if len(raw) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint: missing preamble")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    body = _PREFIX.size + hlen
    if body > len(raw):
        raise CheckpointError("truncated checkpoint: header extends past end of file")
    try:
        header = json.loads(raw[_PREFIX.size:body].decode("utf-8"))
        config = ModelConfig(**header["config"])
        mode = header["mode"]
        expected = param_shapes(config, mode)
    except (ValueError, KeyError, TypeError) as err:
        raise CheckpointError(f"malformed checkpoint header: {err}") from None

    sizes = []
    for name, shape in header["tensors"]:
        if name not in expected:
            raise CheckpointError(f"unknown tensor name {name!r} for mode {mode!r}")
        if tuple(shape) != expected[name]:
            raise CheckpointError(f"tensor {name!r} has shape {shape}, expected {expected[name]}")
        sizes.append(int(np.prod(shape)) * 8)
    if body + sum(sizes) != len(raw):
        raise CheckpointError(
            f"truncated checkpoint: expected {body + sum(sizes)} bytes, found {len(raw)}"
        )
    missing = [n for n in expected if not is_aux(n) and n not in {t[0] for t in header["tensors"]}]
    if missing:
        raise CheckpointError(f"checkpoint lacks emotion-path tensors {missing[:3]}...")

    params = {}
    offset = body
    for (name, shape), size in zip(header["tensors"], sizes):
        params[name] = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += size
    ckpt = Checkpoint(config, mode, params, header["step"], header["rng_state"], header.get("meta", {}))
    return ckpt.stripped() if strip_aux else ckpt


def load_checkpoint(path, strip_aux: bool = False) -> Checkpoint:
    return from_bytes(Path(path).read_bytes(), strip_aux=strip_aux)
