"""Plain-text matrix blocks for replaying channels and designs.

File layout::

    # hybridrelay <kind> v1
    # meta key=value key=value ...
    # matrix <name> <rows> <cols>
    re,im,re,im,...          (one line per matrix row)
    ...

Complex entries are written as interleaved real/imaginary pairs with
``repr`` precision, so a load after a save returns bit-identical arrays.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInputError

MAGIC = "# hybridrelay"


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_blocks(kind: str, blocks: list[tuple[str, np.ndarray]], meta: dict | None = None) -> str:
    lines = [f"{MAGIC} {kind} v1"]
    if meta:
        lines.append("# meta " + " ".join(f"{k}={v}" for k, v in meta.items()))
    for name, m in blocks:
        m = np.atleast_2d(np.asarray(m, dtype=complex))
        rows, cols = m.shape
        lines.append(f"# matrix {name} {rows} {cols}")
        for r in range(rows):
            lines.append(",".join(f"{_fmt(z.real)},{_fmt(z.imag)}" for z in m[r]))
    return "\n".join(lines) + "\n"


def parse_blocks(text: str) -> tuple[str, dict, list[tuple[str, np.ndarray]]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise InvalidInputError("not a hybridrelay matrix file")
    kind = lines[0].split()[2]
    meta: dict[str, str] = {}
    blocks: list[tuple[str, np.ndarray]] = []
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("# meta"):
            for tok in line.split()[2:]:
                key, _, val = tok.partition("=")
                meta[key] = val
            i += 1
        elif line.startswith("# matrix"):
            _, _, name, rows, cols = line.split()
            rows, cols = int(rows), int(cols)
            data = np.empty((rows, cols), dtype=complex)
            for r in range(rows):
                vals = [float(v) for v in lines[i + 1 + r].split(",")]
                if len(vals) != 2 * cols:
                    raise InvalidInputError(f"row {r} of {name} has {len(vals)} values")
                data[r] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
            blocks.append((name, data))
            i += rows + 1
        elif not line.strip():
            i += 1
        else:
            raise InvalidInputError(f"unexpected line {i + 1}: {line[:40]!r}")
    return kind, meta, blocks


def write_blocks(path, kind, blocks, meta=None) -> None:
    Path(path).write_text(dump_blocks(kind, blocks, meta))


def read_blocks(path):
    return parse_blocks(Path(path).read_text())
