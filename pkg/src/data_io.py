from __future__ import annotations
import json
import logging
import os
import typing as t

import numpy as np
import pandas as pd
from openpyxl import load_workbook
from openpyxl.utils import get_column_letter

try:
    from .density_grid import DensityMatrixGrid
    from .errors import DomainError
    from .rmt_bath import BathSample
except ImportError:
    from density_grid import DensityMatrixGrid
    from errors import DomainError
    from rmt_bath import BathSample

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"KINBATH-SNAPSHOT"
SNAPSHOT_VERSION = 1
KIND_GRID = 1
KIND_BATH = 2

# all fields little-endian; complex payload follows as row-major '<c16'
HEADER_DTYPE = np.dtype([
    ("magic", "S16"),
    ("version", "<u8"),
    ("kind", "<u8"),
    ("nr", "<u8"),
    ("ns", "<u8"),
    ("r_extent", "<f8"),
    ("s_extent", "<f8"),
    ("time", "<f8"),
    ("seed", "<u8"),
    ("config_hash", "S32"),
])

REPORT_NAME = "report.xlsx"


def _header(kind: int, nr: int, ns: int, r_extent: float, s_extent: float, time: float, seed: int,
            config_hash: str) -> np.ndarray:
    head = np.zeros(1, dtype=HEADER_DTYPE)
    head[0] = (SNAPSHOT_MAGIC, SNAPSHOT_VERSION, kind, nr, ns, r_extent, s_extent, time, seed,
               config_hash.encode("ascii"))
    return head


def _write(path: str, head: np.ndarray, data: np.ndarray) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as f:
        f.write(head.tobytes())
        f.write(np.ascontiguousarray(data, dtype="<c16").tobytes())


def _read(path: str, expected_kind: int) -> tuple[dict, bytes]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_DTYPE.itemsize:
        raise DomainError(f"{path}: too short for a snapshot header")
    head = np.frombuffer(raw[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(head["magic"]) != SNAPSHOT_MAGIC:
        raise DomainError(f"{path}: not a snapshot file (bad magic)")
    if int(head["version"]) != SNAPSHOT_VERSION:
        raise DomainError(f"{path}: unsupported snapshot version {int(head['version'])}")
    if int(head["kind"]) != expected_kind:
        raise DomainError(f"{path}: holds record kind {int(head['kind'])}, expected {expected_kind}")
    meta = {name: head[name].item() for name in HEADER_DTYPE.names if name not in ("magic", "config_hash")}
    meta["config_hash"] = bytes(head["config_hash"]).rstrip(b"\x00").decode("ascii")
    return meta, raw[HEADER_DTYPE.itemsize:]


def write_snapshot(path: str, rho: DensityMatrixGrid, seed: int, config_hash: str) -> None:
    head = _header(KIND_GRID, rho.nr, rho.ns, rho.r_extent, rho.s_extent, rho.time_stamp, seed, config_hash)
    _write(path, head, rho.values)


def read_snapshot(path: str) -> tuple[DensityMatrixGrid, dict]:
    meta, payload = _read(path, KIND_GRID)
    values = np.frombuffer(payload, dtype="<c16")
    if values.size != meta["nr"] * meta["ns"]:
        raise DomainError(f"{path}: payload holds {values.size} values, header says {meta['nr']} x {meta['ns']}")
    rho = DensityMatrixGrid(values.reshape(meta["nr"], meta["ns"]).astype(complex), meta["r_extent"],
                            meta["s_extent"], meta["time"])
    return rho, meta


def write_bath_sample(path: str, smp: BathSample, seed: int, config_hash: str) -> None:
    """Matrices H(X_i) stacked along the first axis; nr holds the number of X points, ns the dimension."""
    n_x, dim, _ = smp.matrices.shape
    head = _header(KIND_BATH, n_x, dim, 0.0, 0.0, float(smp.member), seed, config_hash)
    _write(path, head, smp.matrices)


def read_bath_matrices(path: str) -> tuple[np.ndarray, dict]:
    meta, payload = _read(path, KIND_BATH)
    n_x, dim = meta["nr"], meta["ns"]
    values = np.frombuffer(payload, dtype="<c16")
    if values.size != n_x * dim * dim:
        raise DomainError(f"{path}: payload size does not match {n_x} matrices of dimension {dim}")
    return values.reshape(n_x, dim, dim).astype(complex), meta


def write_table(df: pd.DataFrame, path: str, provenance: dict) -> str:
    """Tab-separated columns under a '#'-prefixed provenance header."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in provenance.items():
            f.write(f"# {key}: {value}\n")
        df.to_csv(f, sep="\t", index=False, float_format="%.12g")
    logger.debug("wrote %s (%d rows)", path, len(df))
    return path


def read_table(path: str) -> tuple[pd.DataFrame, dict]:
    provenance = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(": ")
            provenance[key] = value
    return pd.read_csv(path, sep="\t", comment="#"), provenance


def _jsonable(obj: t.Any) -> t.Any:
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)


def write_summary(path: str, summary: dict) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True, default=_jsonable, allow_nan=True)
    return path


def read_summary(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_report_workbook(path: str, sheets: dict[str, pd.DataFrame], provenance: dict) -> str:
    """One sheet per table plus a provenance sheet; columns auto-sized."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    names = []
    with pd.ExcelWriter(path, engine="openpyxl") as xw:
        pd.DataFrame(list(provenance.items()), columns=["key", "value"]).to_excel(xw, index=False, sheet_name="Provenance")
        names.append("Provenance")
        for name, df in sheets.items():
            # sheet titles are limited to 31 characters
            title = name[:31]
            df.to_excel(xw, index=False, sheet_name=title)
            names.append(title)
    _finalize_workbook(path, names)
    return path


def _finalize_workbook(path: str, sheets: list[str]) -> None:
    wb = load_workbook(path)
    for name in sheets:
        if name not in wb.sheetnames:
            continue
        ws = wb[name]
        # Trim trailing blank rows
        max_row = ws.max_row
        max_col = ws.max_column
        while max_row > 1 and all((ws.cell(row=max_row, column=c).value in (None, "")) for c in range(1, max_col + 1)):
            ws.delete_rows(max_row)
            max_row -= 1
        # Auto-size columns (cap width at 60)
        for c in range(1, ws.max_column + 1):
            letter = get_column_letter(c)
            max_len = max((len(str(ws.cell(row=r, column=c).value or "")) for r in range(1, ws.max_row + 1)), default=0)
            ws.column_dimensions[letter].width = min(max_len + 2, 60)
        ws.freeze_panes = "A2"
    wb.save(path)
