"""ECG8 binary dataset files.

Layout (little-endian)::

    b"ECG8" | version u16 | class count u16 | per class: name length u16, UTF-8 bytes
    | record count u32 | per record: lead count u8, length u32, fs u16, label bitmask u32,
    | samples as float32, lead-major in canonical lead order
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractError
from .record import LEADS_8, LEADS_12, ClassVocabulary, EcgRecord

MAGIC = b"ECG8"
VERSION = 1


class FormatError(ContractError):
    pass


@dataclass
class Dataset:
    vocabulary: ClassVocabulary
    records: list[EcgRecord]

    def __len__(self) -> int:
        return len(self.records)

    def class_counts(self) -> list[int]:
        return [sum(1 for r in self.records if r.labels >> i & 1) for i in range(len(self.vocabulary))]


def encode_dataset(ds: Dataset) -> bytes:
    parts = [MAGIC, struct.pack("<HH", VERSION, len(ds.vocabulary))]
    for name in ds.vocabulary:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(struct.pack("<I", len(ds.records)))
    for rec in ds.records:
        ds.vocabulary.check_mask(rec.labels)
        if not 0 < rec.fs < 65536 or int(rec.fs) != rec.fs:
            raise FormatError(f"sampling rate {rec.fs} does not fit a u16")
        parts.append(struct.pack("<BIHI", rec.n_leads, rec.length, int(rec.fs), rec.labels))
        parts.append(rec.to_array().astype("<f4").tobytes())
    return b"".join(parts)


def decode_dataset(buf: bytes) -> Dataset:
    view = memoryview(buf)
    if bytes(view[:4]) != MAGIC:
        raise FormatError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}")
    pos = 4
    try:
        version, n_classes = struct.unpack_from("<HH", view, pos)
        pos += 4
        if version != VERSION:
            raise FormatError(f"unsupported ECG8 version {version}")
        names = []
        for _ in range(n_classes):
            (n,) = struct.unpack_from("<H", view, pos)
            pos += 2
            names.append(bytes(view[pos:pos + n]).decode("utf-8"))
            pos += n
        (n_records,) = struct.unpack_from("<I", view, pos)
        pos += 4
        records = []
        for _ in range(n_records):
            n_leads, length, fs, labels = struct.unpack_from("<BIHI", view, pos)
            pos += 11
            order = {8: LEADS_8, 12: LEADS_12}.get(n_leads)
            if order is None:
                raise FormatError(f"record with {n_leads} leads; only 8 or 12 are valid")
            count = n_leads * length
            arr = np.frombuffer(view, dtype="<f4", count=count, offset=pos).reshape(n_leads, length)
            pos += 4 * count
            records.append(EcgRecord.from_array(arr.astype(np.float64), fs, labels, order))
    except (struct.error, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"truncated ECG8 data at byte {pos}") from exc
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after last record")
    return Dataset(ClassVocabulary(tuple(names)), records)


def write_dataset(path, ds: Dataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(ds))
    return path


def read_dataset(path) -> Dataset:
    return decode_dataset(Path(path).read_bytes())


def record_hash(rec: EcgRecord) -> str:
    """Content hash of one record's samples, rate and labels (float32 canonical form)."""
    h = hashlib.sha256(struct.pack("<BIHI", rec.n_leads, rec.length, int(rec.fs), rec.labels))
    h.update(rec.to_array().astype("<f4").tobytes())
    return h.hexdigest()


def split_hash(records: list[EcgRecord]) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(record_hash(rec).encode())
    return h.hexdigest()[:16]
