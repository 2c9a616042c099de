"""Length-prefixed binary block container with a JSON header.

One file = magic | u32 version | u32 header_len | canonical-JSON header |
block*.  Each block is u8 name_len | name | u8 dtype | u8 ndim |
u64 shape[ndim] | u64 nbytes | payload | u32 crc32(payload).  Everything is
little-endian; floats are IEEE-754.  Writing is canonical (sorted JSON keys,
caller-ordered blocks), so write -> read -> write round-trips byte-exactly.
docs/episode_format.md documents the episode instantiation of this layout.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from . import FtactError


class CorruptBlock(FtactError):
    pass


class SchemaVersionMismatch(FtactError):
    pass


_DTYPES = {0: "<f4", 1: "<f8", 2: "u1", 3: "<i8"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def write_container(
    path: str | Path,
    magic: bytes,
    version: int,
    header: dict,
    blocks: list[tuple[str, np.ndarray]],
) -> Path:
    path = Path(path)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<II", version, len(header_bytes)))
        f.write(header_bytes)
        for name, arr in blocks:
            arr = np.ascontiguousarray(arr)
            dtype = np.dtype(arr.dtype).newbyteorder("<") if arr.dtype.kind == "f" else arr.dtype
            code = _DTYPE_CODES.get(np.dtype(dtype))
            if code is None:
                raise FtactError(f"block '{name}': unsupported dtype {arr.dtype}")
            name_b = name.encode("ascii")
            payload = arr.astype(_DTYPES[code], copy=False).tobytes()
            f.write(struct.pack("<B", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<BB", code, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(struct.pack("<Q", len(payload)))
            f.write(payload)
            f.write(struct.pack("<I", zlib.crc32(payload)))
    tmp.replace(path)
    return path


def read_container(
    path: str | Path,
    magic: bytes,
    version: int,
    mmap: bool = False,
) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and checksum-verify a container; arrays are memmapped if asked."""
    path = Path(path)
    blocks: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        head = f.read(len(magic) + 8)
        if len(head) < len(magic) + 8 or head[: len(magic)] != magic:
            raise CorruptBlock(f"{path}: bad magic")
        got_version, header_len = struct.unpack("<II", head[len(magic) :])
        if got_version != version:
            raise SchemaVersionMismatch(f"{path}: schema version {got_version}, expected {version}")
        header_bytes = f.read(header_len)
        if len(header_bytes) != header_len:
            raise CorruptBlock(f"{path}: truncated header")
        try:
            header = json.loads(header_bytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptBlock(f"{path}: unreadable header: {exc}") from exc
        while True:
            nl = f.read(1)
            if not nl:
                break
            (name_len,) = struct.unpack("<B", nl)
            name = f.read(name_len).decode("ascii")
            meta = f.read(2)
            if len(meta) != 2:
                raise CorruptBlock(f"{path}: truncated block '{name}'")
            code, ndim = struct.unpack("<BB", meta)
            if code not in _DTYPES:
                raise CorruptBlock(f"{path}: block '{name}' has unknown dtype code {code}")
            shape_b = f.read(8 * ndim)
            if len(shape_b) != 8 * ndim:
                raise CorruptBlock(f"{path}: truncated shape of '{name}'")
            shape = struct.unpack(f"<{ndim}Q", shape_b)
            (nbytes,) = struct.unpack("<Q", f.read(8))
            offset = f.tell()
            payload = f.read(nbytes)
            if len(payload) != nbytes:
                raise CorruptBlock(f"{path}: truncated payload of '{name}'")
            (crc,) = struct.unpack("<I", f.read(4))
            if zlib.crc32(payload) != crc:
                raise CorruptBlock(f"{path}: checksum mismatch in block '{name}'")
            dtype = np.dtype(_DTYPES[code])
            if mmap:
                arr = np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=shape)
            else:
                arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
            blocks[name] = arr
    return header, blocks
