"""
Versioned binary containers.

Layout: magic bytes, an 8-byte little-endian header length, a canonical JSON header, then the raw
little-endian array buffers back to back. The header lists every array as (name, dtype, shape,
offset, nbytes) with offsets relative to the start of the payload. Equal inputs give identical
bytes on every platform.
"""
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from recrl.exceptions import DataFormatError
from recrl.utils import canonical_json

_LENGTH = struct.Struct("<Q")
_DTYPES = {"f": "<f8", "i": "<i8", "u": "<i8", "b": "|u1"}

PathLike = Union[str, Path]


def _portable(array: np.ndarray) -> np.ndarray:
    kind = np.asarray(array).dtype.kind
    if kind not in _DTYPES:
        raise TypeError(f"Cannot store arrays of dtype {array.dtype}.")
    return np.ascontiguousarray(array, dtype=np.dtype(_DTYPES[kind]))


def write_container(
    path: PathLike, magic: bytes, meta: Mapping[str, Any], arrays: Mapping[str, np.ndarray]
) -> None:
    """Write ``arrays`` and ``meta`` atomically to ``path``."""
    manifest = []
    buffers = []
    offset = 0
    for name, array in arrays.items():
        portable = _portable(array)
        raw = portable.tobytes(order="C")
        manifest.append(
            {
                "name": name,
                "dtype": portable.dtype.str,
                "bool": np.asarray(array).dtype.kind == "b",
                "shape": list(portable.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        buffers.append(raw)
        offset += len(raw)
    header = canonical_json({"meta": dict(meta), "arrays": manifest}).encode("utf-8")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=target.parent, prefix=target.name, suffix=".tmp")
    try:
        with os.fdopen(handle, "wb") as stream:
            stream.write(magic)
            stream.write(_LENGTH.pack(len(header)))
            stream.write(header)
            for raw in buffers:
                stream.write(raw)
        os.replace(temporary, target)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise


def read_container(
    path: PathLike, magic: bytes
) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Read a container written by write_container.

    Raises
    ------
    DataFormatError
        If the magic bytes differ or the file is truncated.
    """
    blob = Path(path).read_bytes()
    if not blob.startswith(magic):
        raise DataFormatError(f"{path}: not a {magic.decode('ascii')} file.")
    start = len(magic)
    if len(blob) < start + _LENGTH.size:
        raise DataFormatError(f"{path}: truncated header.")
    (header_length,) = _LENGTH.unpack_from(blob, start)
    header_start = start + _LENGTH.size
    payload_start = header_start + header_length
    try:
        header = json.loads(blob[header_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise DataFormatError(f"{path}: unreadable header.") from err
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        begin = payload_start + entry["offset"]
        end = begin + entry["nbytes"]
        if end > len(blob):
            raise DataFormatError(f"{path}: array {entry['name']!r} is truncated.")
        array = np.frombuffer(blob[begin:end], dtype=np.dtype(entry["dtype"])).reshape(
            entry["shape"]
        )
        arrays[entry["name"]] = array.astype(bool) if entry["bool"] else array.copy()
    return header["meta"], arrays
