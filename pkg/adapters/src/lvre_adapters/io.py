"""Atomic file writes and the engine's binary store layout, written here
independently from the engine package: adapters talk to it through wire
formats only, so this file is the other half of the format contract.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .config import AdapterError

STORE_MAGIC = b"LVRE"
STORE_VERSION = 1


def write_atomic_text(path: str | Path, content: str) -> None:
    _write_atomic(path, content.encode("utf-8"))


def _write_atomic(path: str | Path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_store(path: str | Path, dim: int, records: list[tuple[str, np.ndarray]]) -> None:
    """Write an embedding store: magic, version u16, dim u32, count u64,
    then [id length u16, id UTF-8, dim little-endian float32] per record.
    The whole file is written atomically; a failed export leaves nothing.
    """
    if dim < 1:
        raise AdapterError(f"store dimension must be >= 1, got {dim}")
    seen: set[str] = set()
    chunks = [STORE_MAGIC, struct.pack("<HIQ", STORE_VERSION, dim, len(records))]
    for record_id, values in records:
        if record_id in seen:
            raise AdapterError(f"duplicate id {record_id!r}")
        seen.add(record_id)
        arr = np.asarray(values, dtype="<f4")
        if arr.ndim != 1 or arr.shape[0] != dim:
            raise AdapterError(
                f"vector for {record_id!r} has length {arr.size}, expected {dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise AdapterError(f"non-finite vector component for {record_id!r}")
        id_bytes = record_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise AdapterError(f"id too long to persist: {record_id[:40]!r}...")
        chunks.append(struct.pack("<H", len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(arr.tobytes())
    _write_atomic(path, b"".join(chunks))
