"""Binary tensor container used for checkpoints and datasets.

Layout::

    8 bytes   little-endian uint64 length N of the header
    N bytes   UTF-8 JSON header: {"tensors": {name: {dtype, shape, offset, nbytes}},
              "metadata": {...}}
    payload   raw little-endian arrays, C order, in header order

Only float64, int64 and bool arrays are stored.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from action_signal.core.exceptions import DataValidationError

_DTYPES = {"float64": "<f8", "int64": "<i8", "bool": "|b1"}


def _encode(array: np.ndarray) -> Tuple[str, np.ndarray]:
    array = np.asarray(array)
    if array.dtype == np.bool_:
        kind = "bool"
    elif np.issubdtype(array.dtype, np.integer):
        kind = "int64"
    elif np.issubdtype(array.dtype, np.floating):
        kind = "float64"
    else:
        raise DataValidationError(f"unsupported tensor dtype: {array.dtype}")
    return kind, np.ascontiguousarray(array, dtype=_DTYPES[kind])


def save_tensors(
    path: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write named arrays and JSON metadata to one file.

    Args:
        path: Destination file
        tensors: Arrays by name; written in sorted name order
        metadata: JSON-serializable mapping stored in the header
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries: Dict[str, Dict[str, Any]] = {}
    payloads = []
    offset = 0
    for name in sorted(tensors):
        kind, data = _encode(tensors[name])
        raw = data.tobytes(order="C")
        entries[name] = {
            "dtype": kind,
            "shape": list(data.shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        payloads.append(raw)
        offset += len(raw)

    header = json.dumps(
        {"tensors": entries, "metadata": dict(metadata or {})},
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in payloads:
            f.write(raw)
    return path


def read_header(path: Union[str, Path]) -> Dict[str, Any]:
    """Header of a tensor file without loading payloads."""
    with open(path, "rb") as f:
        (length,) = struct.unpack("<Q", f.read(8))
        return json.loads(f.read(length).decode("utf-8"))


def load_tensors(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read every array and the metadata of a tensor file.

    Raises:
        DataValidationError: If the file is truncated or malformed.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 8:
        raise DataValidationError(f"truncated tensor file: {path}")
    (length,) = struct.unpack("<Q", blob[:8])
    try:
        header = json.loads(blob[8 : 8 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataValidationError(f"malformed tensor file header: {path}") from e

    base = 8 + length
    tensors = {}
    for name, entry in header["tensors"].items():
        start = base + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise DataValidationError(f"truncated tensor file: {path}")
        array = np.frombuffer(blob[start:end], dtype=_DTYPES[entry["dtype"]])
        array = array.reshape(entry["shape"])
        tensors[name] = array.astype(array.dtype.newbyteorder("="), copy=True)
    return tensors, header.get("metadata", {})
