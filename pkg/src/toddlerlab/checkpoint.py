"""
Flat binary checkpoint format.

Layout (little-endian):
    b"TSIM"                 magic
    u32                     format version
    repeated until EOF:
        u16                 name length
        bytes               UTF-8 name
        u8                  rank
        u32 * rank          dims
        f32 * prod(dims)    values
"""

from __future__ import annotations

import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import BinaryIO, Dict, Iterator, Mapping, Union

import numpy as np

from .exceptions import CheckpointException

MAGIC = b"TSIM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sI")
_NAME_LEN = struct.Struct("<H")
_RANK = struct.Struct("<B")


def encode_checkpoint(params: Mapping[str, np.ndarray]) -> bytes:
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION)]
    for name, array in params.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointException(f"Parameter name too long: {name[:40]}...")
        values = np.asarray(array, dtype="<f4")
        if values.ndim > 0xFF:
            raise CheckpointException(f"Parameter '{name}' has rank {values.ndim}")
        chunks.append(_NAME_LEN.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_RANK.pack(values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.tobytes(order="C"))
    return b"".join(chunks)


def decode_checkpoint(payload: bytes) -> Dict[str, np.ndarray]:
    """
    Parse a checkpoint payload into float32 arrays keyed by parameter name.

    Raises:
        CheckpointException: On bad magic, unknown version or truncation.
    """
    if len(payload) < _HEADER.size:
        raise CheckpointException("Checkpoint is truncated (no header)")
    magic, version = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise CheckpointException(f"Not a checkpoint file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointException(f"Unsupported checkpoint version {version}")

    params: Dict[str, np.ndarray] = {}
    offset = _HEADER.size
    try:
        while offset < len(payload):
            (name_len,) = _NAME_LEN.unpack_from(payload, offset)
            offset += _NAME_LEN.size
            name = payload[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = _RANK.unpack_from(payload, offset)
            offset += _RANK.size
            dims = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            end = offset + 4 * count
            if end > len(payload):
                raise CheckpointException(f"Checkpoint is truncated inside '{name}'")
            params[name] = (
                np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
                .astype(np.float32)
                .reshape(dims)
            )
            offset = end
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointException("Checkpoint is corrupt", cause=e) from e
    return params


@contextmanager
def atomic_writer(path: Union[str, Path]) -> Iterator[BinaryIO]:
    """Yield a handle on a temporary sibling; rename it over ``path`` on success."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> Path:
    with atomic_writer(path) as handle:
        handle.write(payload)
    return Path(path)


def save_checkpoint(path: Union[str, Path], params: Mapping[str, np.ndarray]) -> Path:
    return atomic_write_bytes(path, encode_checkpoint(params))


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    source = Path(path)
    if not source.is_file():
        raise CheckpointException(f"Checkpoint file not found: {source}")
    return decode_checkpoint(source.read_bytes())
