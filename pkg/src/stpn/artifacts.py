"""Binary artifact container: JSON header + little-endian float64 payload.

Layout: 8-byte magic, uint32 LE header length, UTF-8 JSON header (compact,
sorted keys), then the concatenated float64 payload. Arrays are written in
name order, so a fixed header + fixed values means byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"STPNC001"
CONTAINER_FORMAT_VERSION = 1


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    names = sorted(arrays)
    index = []
    offset = 0
    blobs = []
    for name in names:
        # asarray, not ascontiguousarray: the latter promotes 0-d scalars to 1-d
        a = np.asarray(arrays[name], dtype=np.float64)
        blob = a.astype("<f8").tobytes()
        index.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": CONTAINER_FORMAT_VERSION,
        "kind": kind,
        "arrays": index,
        "meta": meta,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def read_container(path, expect_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and fully validate a container; raises before returning anything partial."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a recognized artifact (bad magic)")
    (header_len,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    header_start = len(MAGIC) + 4
    if len(raw) < header_start + header_len:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes, need {header_start + header_len})")
    try:
        header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValueError(f"{path}: corrupted header: {e}") from None
    version = header.get("format_version")
    if version != CONTAINER_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported container version {version!r}")
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise ValueError(f"{path}: expected a {expect_kind!r} artifact, found {header.get('kind')!r}")
    payload = raw[header_start + header_len :]
    arrays = {}
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise ValueError(
                f"{path}: truncated payload for array {entry['name']!r} "
                f"(need {start + nbytes} bytes, have {len(payload)})"
            )
        a = np.frombuffer(payload[start : start + nbytes], dtype="<f8").astype(np.float64)
        arrays[entry["name"]] = a.reshape(entry["shape"])
    return header["meta"], arrays
