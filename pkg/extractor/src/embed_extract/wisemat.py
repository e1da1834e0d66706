"""Minimal writer for the WISEMAT1 matrix pair (text header + raw payload).

Kept dependency-free on purpose: the consumer validates on load, so this side
only needs to produce the exact bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = "WISEMAT1"


def write_f32(path: str | Path, array: np.ndarray, *, normalized: bool) -> None:
    path = Path(path)
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {array.shape}")
    rows, cols = array.shape
    path.write_text(f"{MAGIC}\nrows {rows}\ncols {cols}\n"
                    f"dtype f32\nnormalized {int(normalized)}\n",
                    encoding="ascii")
    path.with_name(path.name + ".bin").write_bytes(array.tobytes())
