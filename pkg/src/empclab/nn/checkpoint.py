"""Versioned binary checkpoints for networks and optimizer state.

Byte layout (all integers little-endian):

    bytes 0..7    magic ``EMPCLAB1``
    bytes 8..11   uint32 header length ``H``
    bytes 12..    UTF-8 JSON header of ``H`` bytes with keys
                  ``format_version`` (1), ``kind``, ``topology``, ``seed``,
                  ``extras`` and ``blocks`` (ordered list of
                  ``{"name": str, "shape": [int, ...]}``)
    then          one raw little-endian float64 C-order array per block,
                  in header order, with no padding between blocks.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CorruptCheckpointError

MAGIC = b"EMPCLAB1"
FORMAT_VERSION = 1


def write_checkpoint(path, kind: str, topology, blocks: dict[str, np.ndarray],
                     extras: dict | None = None, seed: int | None = None):
    """Serialize named float64 blocks plus a JSON header."""
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "topology": topology,
        "seed": seed,
        "extras": extras or {},
        "blocks": [{"name": name, "shape": list(arr.shape)}
                   for name, arr in blocks.items()],
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(payload)).tobytes())
        fh.write(payload)
        for arr in blocks.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Parse a checkpoint; returns (kind, topology, blocks, extras, seed).

    Structural problems raise CorruptCheckpointError naming the byte offset
    at which the file ended or failed validation.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise CorruptCheckpointError(
            f"file ends at offset {len(raw)}; expected at least "
            f"{len(MAGIC) + 4} bytes of magic and header length")
    if raw[:len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError(f"bad magic at offset 0: {raw[:8]!r}")
    header_len = int(np.frombuffer(raw, dtype="<u4", count=1,
                                   offset=len(MAGIC))[0])
    body_start = len(MAGIC) + 4
    if len(raw) < body_start + header_len:
        raise CorruptCheckpointError(
            f"file ends at offset {len(raw)} inside the JSON header "
            f"(needs {body_start + header_len})")
    try:
        header = json.loads(raw[body_start:body_start + header_len])
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError(
            f"unparseable JSON header at offset {body_start}: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CorruptCheckpointError(
            f"unsupported format version {header.get('format_version')!r}")

    blocks = {}
    offset = body_start + header_len
    for spec in header["blocks"]:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        if len(raw) < offset + nbytes:
            raise CorruptCheckpointError(
                f"file ends at offset {len(raw)} inside block "
                f"{spec['name']!r} (needs {offset + nbytes})")
        arr = np.frombuffer(raw, dtype="<f8",
                            count=nbytes // 8, offset=offset).reshape(shape)
        blocks[spec["name"]] = arr.astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise CorruptCheckpointError(
            f"{len(raw) - offset} trailing bytes after offset {offset}")
    return (header["kind"], header["topology"], blocks,
            header.get("extras", {}), header.get("seed"))
