"""CSV and JSON writers for run artifacts.

CSV files are comma-delimited with a header row and 17 significant digits.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .propagation import FieldState

SNAPSHOT_COLUMNS = (
    "z", "abs2_E+", "abs2_E-", "abs2_sigma_gs", "abs2_sigma_ge+", "abs2_sigma_ge-",
    "re_psi_d", "im_psi_d",
)


def format_table(header, columns) -> str:
    cols = [np.asarray(c, dtype=float) for c in columns]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*cols):
        buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def snapshot_csv(state: FieldState, psi_d) -> str:
    st = state.to_z()
    amps = np.abs(st.amplitudes) ** 2
    psi_d = np.asarray(psi_d, dtype=complex)
    return format_table(SNAPSHOT_COLUMNS, [st.grid.z, *amps, psi_d.real, psi_d.imag])


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_default, allow_nan=True) + "\n"


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
