"""Checkpoint format: a text manifest plus one raw little-endian IEEE-754 blob.

manifest.txt lines:
    format awml-params-1
    dtype float64|float32
    byteorder little
    entry <name> <offset> <dim0>x<dim1>...     (offset in values; scalar shape '-')
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from awml.errors import SchemaError
from awml.numcore.params import ParamSet

MANIFEST = "manifest.txt"
BLOB = "params.bin"


def save_params(params: ParamSet, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dtypes = {v.dtype for v in params.values()}
    if len(dtypes) > 1:
        raise SchemaError(f"mixed dtypes {dtypes} cannot share one blob")
    dtype = np.dtype(dtypes.pop() if dtypes else np.float64)
    code = "<f8" if dtype == np.float64 else "<f4"
    lines = ["format awml-params-1", f"dtype {dtype.name}", "byteorder little"]
    offset = 0
    chunks = []
    for name, arr in params.items():
        if any(c.isspace() for c in name):
            raise SchemaError(f"entry name {name!r} contains whitespace")
        shape = "x".join(str(s) for s in arr.shape) or "-"
        lines.append(f"entry {name} {offset} {shape}")
        chunks.append(np.ascontiguousarray(arr, dtype=code).tobytes())
        offset += arr.size
    (d / MANIFEST).write_text("\n".join(lines) + "\n")
    (d / BLOB).write_bytes(b"".join(chunks))
    return d


def load_params(directory: str | Path) -> ParamSet:
    d = Path(directory)
    header = {}
    entries = []
    for line in (d / MANIFEST).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "entry":
            name, offset, shape = parts[1], int(parts[2]), parts[3]
            dims = () if shape == "-" else tuple(int(s) for s in shape.split("x"))
            entries.append((name, offset, dims))
        else:
            header[parts[0]] = parts[1]
    codes = {"float64": "<f8", "float32": "<f4"}
    if header.get("dtype") not in codes or header.get("byteorder") != "little":
        raise SchemaError(f"unsupported checkpoint header {header}")
    native = np.dtype(header["dtype"])
    blob = np.frombuffer((d / BLOB).read_bytes(), dtype=codes[header["dtype"]])
    out = ParamSet()
    for name, offset, dims in entries:
        n = int(np.prod(dims)) if dims else 1
        if offset + n > blob.size:
            raise SchemaError(f"entry {name} runs past the end of the blob")
        out[name] = blob[offset:offset + n].reshape(dims).astype(native)
    return out
