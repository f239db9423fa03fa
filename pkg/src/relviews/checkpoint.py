"""Text checkpoint container shared by the encoder, cost head, and proxies.

Layout: a version line, one `config` line per key=value pair, then per
tensor a `tensor <name> <dim0,dim1,...>` line followed by one line of
space-separated values at 17 significant digits (bit-comparable float64
round trips). Tensor order is fixed by the writer and preserved on read.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

_HEADER = "relviews-checkpoint 1"


def write_checkpoint(path, config: dict[str, str],
                     tensors: list[tuple[str, np.ndarray]]) -> None:
    lines = [_HEADER]
    for key in config:
        lines.append(f"config {key}={config[key]}")
    for name, arr in tensors:
        arr = np.asarray(arr, dtype=np.float64)
        dims = ",".join(str(d) for d in arr.shape) if arr.ndim else "0"
        lines.append(f"tensor {name} {dims}")
        lines.append(" ".join(f"{x:.17g}" for x in arr.ravel()))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(path) -> tuple[dict[str, str], list[tuple[str, np.ndarray]]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _HEADER:
        raise ConfigError(f"not a checkpoint file: {path}")
    config: dict[str, str] = {}
    tensors: list[tuple[str, np.ndarray]] = []
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("config "):
            key, _, value = line[len("config "):].partition("=")
            config[key] = value
            i += 1
        elif line.startswith("tensor "):
            _, name, dims = line.split(" ", 2)
            shape = tuple(int(d) for d in dims.split(",")) if dims != "0" else ()
            if i + 1 >= len(lines):
                raise ConfigError(f"truncated tensor {name}")
            values = np.array([float(t) for t in lines[i + 1].split()])
            expect = int(np.prod(shape)) if shape else 1
            if values.size != expect:
                raise ConfigError(f"tensor {name}: expected {expect} values, got {values.size}")
            tensors.append((name, values.reshape(shape)))
            i += 2
        elif not line.strip():
            i += 1
        else:
            raise ConfigError(f"unrecognized checkpoint line: {line!r}")
    return config, tensors
