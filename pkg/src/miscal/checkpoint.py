"""Model checkpoint files (format tag MCF1).

A checkpoint is a UTF-8 text manifest of "key value" lines followed by raw
parameter bytes:

    magic MCF1
    dims 32,6,10
    k 10
    seed 7
    <extra keys, sorted, one per line>
    end
    <little-endian float32 blobs: layer 0 weights, layer 0 bias, layer 1 ...>

`dims` lists the layer widths input-first, so `k` always equals its last
entry. Weight matrices are flattened row-major from shape (fan_in, fan_out).
Writers may add arbitrary extra keys (dataset spec, CLI invocation, ...);
values run to the end of the line and may contain spaces.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import FormatError
from .nn import Model

MAGIC = "MCF1"
_RESERVED = ("magic", "dims", "k", "end")


def param_bytes(model: Model) -> bytes:
    """All parameters as one little-endian float32 blob, in layer order."""
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def checksum(model: Model) -> str:
    """SHA-256 hex digest of the parameter blob."""
    return hashlib.sha256(param_bytes(model)).hexdigest()


def checkpoint_bytes(model: Model, seed: int, extra: dict[str, str] | None = None) -> bytes:
    lines = [
        f"magic {MAGIC}",
        "dims " + ",".join(str(d) for d in model.layer_dims),
        f"k {model.num_classes}",
        f"seed {int(seed)}",
    ]
    extras = {k: str(v) for k, v in (extra or {}).items()}
    for key in sorted(extras):
        if key in _RESERVED or key == "seed":
            raise FormatError(f"extra manifest key {key!r} collides with a reserved key")
        if " " in key or "\n" in key or "\n" in extras[key]:
            raise FormatError(f"manifest entry for {key!r} must be single-line")
        lines.append(f"{key} {extras[key]}")
    lines.append("end")
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    return manifest + param_bytes(model)


def save_checkpoint(model: Model, path, seed: int, extra: dict[str, str] | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, seed, extra))


def load_checkpoint(path) -> tuple[Model, dict[str, str]]:
    """Parse a checkpoint; returns the model and the full manifest.

    Raises FormatError, naming the byte offset, on bad magic, malformed or
    missing manifest keys, or a parameter blob of the wrong length.
    """
    data = Path(path).read_bytes()
    manifest: dict[str, str] = {}
    pos = 0
    first = True
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise FormatError("manifest is not terminated by an 'end' line", offset=pos)
        try:
            line = data[pos:nl].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("manifest line is not valid UTF-8", offset=pos) from None
        if first:
            if line != f"magic {MAGIC}":
                raise FormatError(f"bad magic, expected 'magic {MAGIC}'", offset=0)
            first = False
        elif line == "end":
            pos = nl + 1
            break
        else:
            key, sep, value = line.partition(" ")
            if not sep or not key:
                raise FormatError(f"malformed manifest line {line!r}", offset=pos)
            if key in manifest:
                raise FormatError(f"duplicate manifest key {key!r}", offset=pos)
            manifest[key] = value
        pos = nl + 1

    for required in ("dims", "k", "seed"):
        if required not in manifest:
            raise FormatError(f"manifest is missing the {required!r} key", offset=pos)
    try:
        dims = [int(d) for d in manifest["dims"].split(",")]
        k = int(manifest["k"])
        int(manifest["seed"])
    except ValueError:
        raise FormatError("dims, k, and seed must be integers", offset=pos) from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise FormatError(f"invalid layer dims {dims}", offset=pos)
    if k != dims[-1]:
        raise FormatError(f"k {k} does not equal the final layer width {dims[-1]}", offset=pos)

    expected = sum(fi * fo + fo for fi, fo in zip(dims[:-1], dims[1:]))
    blob = data[pos:]
    if len(blob) != 4 * expected:
        raise FormatError(
            f"parameter blob holds {len(blob)} bytes, expected {4 * expected}",
            offset=pos + min(len(blob), 4 * expected),
        )
    flat = np.frombuffer(blob, dtype="<f4")
    if not np.all(np.isfinite(flat)):
        raise FormatError("parameter blob contains non-finite values", offset=pos)

    weights, biases = [], []
    cursor = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[cursor : cursor + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        cursor += fan_in * fan_out
        biases.append(flat[cursor : cursor + fan_out].copy())
        cursor += fan_out
    return Model(tuple(weights), tuple(biases)), manifest
