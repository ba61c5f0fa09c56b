"""CNV1 checkpoint container.

Layout (little-endian)::

    b"CNV1" | meta length u32 | meta: canonical JSON, UTF-8 | parameter count u32
    per parameter: name length u16, name UTF-8 | ndim u8 | dims u32 each | float64 data

The JSON is written with sorted keys and no whitespace, so a load -> save
cycle reproduces the original bytes.
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..ecg.preprocess import Normalizer
from ..ecg.record import ClassVocabulary
from ..errors import ContractError
from .config import ModelConfig

MAGIC = b"CNV1"


class CheckpointError(ContractError):
    pass


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def encode_container(meta: dict, params: "OrderedDict[str, np.ndarray]") -> bytes:
    text = canonical_json(meta)
    parts = [MAGIC, struct.pack("<I", len(text)), text, struct.pack("<I", len(params))]
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_container(buf: bytes) -> tuple[dict, "OrderedDict[str, np.ndarray]"]:
    if buf[:4] != MAGIC:
        raise CheckpointError(f"not a CNV1 checkpoint (magic {buf[:4]!r})")
    try:
        pos = 4
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        meta = json.loads(buf[pos:pos + n].decode("utf-8"))
        pos += n
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        params = OrderedDict()
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + ln].decode("utf-8")
            pos += ln
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(buf):
                raise CheckpointError(f"checkpoint truncated inside parameter {name!r}")
            params[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after the last parameter")
    return meta, params


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    vocabulary: ClassVocabulary
    normalizer: Normalizer
    params: "OrderedDict[str, np.ndarray]"
    history: list[dict] = field(default_factory=list)

    KIND = "cnvae"

    def meta(self) -> dict:
        return {
            "kind": self.KIND,
            "config": self.config.to_dict(),
            "vocabulary": list(self.vocabulary.names),
            "normalizer": self.normalizer.to_dict(),
            "history": self.history,
        }

    def to_bytes(self) -> bytes:
        return encode_container(self.meta(), self.params)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ModelCheckpoint":
        meta, params = decode_container(buf)
        if meta.get("kind") != cls.KIND:
            raise CheckpointError(f"expected a {cls.KIND} checkpoint, found {meta.get('kind')!r}")
        return cls(ModelConfig.from_dict(meta["config"]), ClassVocabulary(tuple(meta["vocabulary"])),
                   Normalizer.from_dict(meta["normalizer"]), params, meta["history"])

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        return cls.from_bytes(Path(path).read_bytes())

    def build_model(self):
        from .network import ConditionalVAE

        model = ConditionalVAE(self.config)
        try:
            model.load_state_dict(self.params)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"checkpoint does not fit its own config: {exc}") from exc
        return model
