"""Delimited-text file formats for every pipeline stage.

Floats are written with ``repr`` so values survive a round trip bit for bit.
Analysis, table and ladder files start with ``# ladderforge-v1 <kind>``.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .assembler import RdtTable, Rung
from .model import (
    DataError,
    EncodeParams,
    MultiplierPair,
    OperatingPoint,
    RdtFit,
    Representation,
    ShotRecord,
    psnr_from_mse,
)

MAGIC = "# ladderforge-v1"

DATASET_COLUMNS = ["shot_id", "duration_s", "preset_idx", "width", "height", "crf",
                   "rate_kbps", "mse", "cpu_user_s"]
ANALYSIS_COLUMNS = DATASET_COLUMNS[:2] + ["op_index"] + DATASET_COLUMNS[2:] + [
    "on_hull", "c", "k1", "k2", "r_squared", "lambda", "mu"]
TABLE_COLUMNS = ["lambda", "mu", "R_kbps", "D_mse", "T_s", "selection"]
LADDER_COLUMNS = ["target_kbps", "status", "lambda", "mu", "R_kbps", "D_mse", "T_s",
                  "psnr_db", "r_c_pct", "selection"]


def fmt(v: Optional[float]) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _open_write(path):
    return open(path, "w", newline="", encoding="utf-8")


def _header(kind: str, meta: Optional[dict] = None) -> str:
    extra = "".join(f" {k}={v}" for k, v in (meta or {}).items())
    return f"{MAGIC} {kind}{extra}\n"


def read_header(path) -> tuple[str, dict]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith(MAGIC):
        raise DataError(f"{path}: missing '{MAGIC}' header line")
    parts = first[len(MAGIC):].split()
    if not parts:
        raise DataError(f"{path}: header names no file kind")
    meta = dict(p.split("=", 1) for p in parts[1:] if "=" in p)
    return parts[0], meta


def _rows(path, kind: Optional[str], columns: Sequence[str]):
    """Yield dict rows, skipping '#' lines and checking the column header."""
    if kind is not None:
        found, _ = read_header(path)
        if found != kind:
            raise DataError(f"{path}: expected a {kind} file, got {found}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.DictReader(lines)
        if reader.fieldnames is None or list(reader.fieldnames) != list(columns):
            raise DataError(f"{path}: expected columns {','.join(columns)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def _num(row: dict, key: str, cast=float, path="", lineno=0):
    try:
        return cast(row[key])
    except (TypeError, ValueError):
        raise DataError(f"{path}:{lineno}: bad {key} value {row.get(key)!r}") from None


# -- operating points ---------------------------------------------------------

def _point_cells(op: OperatingPoint) -> list[str]:
    p = op.params
    return [str(p.preset_idx), str(p.width), str(p.height), str(p.crf),
            fmt(op.rate), fmt(op.distortion), fmt(op.time)]


def write_dataset(shots: Sequence[ShotRecord], path) -> None:
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for shot in shots:
            for op in shot.points:
                w.writerow([shot.shot_id, fmt(shot.duration)] + _point_cells(op))


def _parse_point(row, path, lineno) -> OperatingPoint:
    params = EncodeParams(
        _num(row, "preset_idx", int, path, lineno),
        _num(row, "width", int, path, lineno),
        _num(row, "height", int, path, lineno),
        _num(row, "crf", int, path, lineno),
    )
    return OperatingPoint(
        params,
        _num(row, "rate_kbps", float, path, lineno),
        _num(row, "mse", float, path, lineno),
        _num(row, "cpu_user_s", float, path, lineno),
    )


def read_dataset(path) -> list[ShotRecord]:
    """Shots in order of first appearance; op index is the row order within a shot."""
    points: dict[str, list[OperatingPoint]] = {}
    durations: dict[str, float] = {}
    for lineno, row in _rows(path, None, DATASET_COLUMNS):
        sid = row["shot_id"]
        if not sid:
            raise DataError(f"{path}:{lineno}: empty shot_id")
        dur = _num(row, "duration_s", float, path, lineno)
        if durations.setdefault(sid, dur) != dur:
            raise DataError(f"{path}:{lineno}: shot {sid} has inconsistent durations")
        points.setdefault(sid, []).append(_parse_point(row, path, lineno))
    return [ShotRecord(sid, tuple(pts), duration=durations[sid]) for sid, pts in points.items()]


# -- analysis -------------------------------------------------------------------

def write_analysis(shots: Sequence[ShotRecord], path) -> None:
    with _open_write(path) as fh:
        fh.write(_header("analysis", {"r2_domain": "log"}))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANALYSIS_COLUMNS)
        for shot in shots:
            hull = {i: k for k, i in enumerate(shot.hull_indices or ())}
            fit = shot.fit
            fit_cells = [fmt(fit.c), fmt(fit.k1), fmt(fit.k2), fmt(fit.r_squared)] if fit else [""] * 4
            for i, op in enumerate(shot.points):
                pair = None
                if shot.multipliers is not None and i in hull:
                    pair = shot.multipliers[hull[i]]
                w.writerow(
                    [shot.shot_id, fmt(shot.duration), str(i)] + _point_cells(op)
                    + ["1" if i in hull else "0"] + fit_cells
                    + [fmt(pair.lam if pair else None), fmt(pair.mu if pair else None)]
                )


def read_analysis(path) -> list[ShotRecord]:
    shots: dict[str, dict] = {}
    for lineno, row in _rows(path, "analysis", ANALYSIS_COLUMNS):
        sid = row["shot_id"]
        entry = shots.setdefault(sid, {
            "duration": _num(row, "duration_s", float, path, lineno),
            "points": [], "hull": [], "pairs": [], "fit": None,
        })
        idx = _num(row, "op_index", int, path, lineno)
        if idx != len(entry["points"]):
            raise DataError(f"{path}:{lineno}: op_index {idx} out of sequence for shot {sid}")
        entry["points"].append(_parse_point(row, path, lineno))
        if row["c"]:
            entry["fit"] = RdtFit(*(_num(row, k, float, path, lineno) for k in ("c", "k1", "k2", "r_squared")))
        if row["on_hull"] == "1":
            entry["hull"].append(idx)
            if row["lambda"]:
                entry["pairs"].append(MultiplierPair(_num(row, "lambda", float, path, lineno),
                                                     _num(row, "mu", float, path, lineno)))
    out = []
    for sid, e in shots.items():
        pairs = tuple(e["pairs"]) if e["pairs"] else None
        out.append(ShotRecord(sid, tuple(e["points"]), duration=e["duration"],
                              hull_indices=tuple(e["hull"]), fit=e["fit"], multipliers=pairs))
    return out


# -- table --------------------------------------------------------------------

def _selection_cell(shot_ids, selection) -> str:
    return ";".join(f"{sid}={int(i)}" for sid, i in zip(shot_ids, selection))


def _parse_selection(cell: str, path, lineno) -> tuple[tuple[str, ...], tuple[int, ...]]:
    ids, sel = [], []
    for part in cell.split(";"):
        sid, sep, idx = part.rpartition("=")
        if not sep or not sid:
            raise DataError(f"{path}:{lineno}: bad selection entry {part!r}")
        ids.append(sid)
        try:
            sel.append(int(idx))
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad selection index {idx!r}") from None
    return tuple(ids), tuple(sel)


def write_table(table: RdtTable, path, meta: Optional[dict] = None) -> None:
    with _open_write(path) as fh:
        fh.write(_header("table", meta))
        fh.write(",".join(TABLE_COLUMNS) + "\n")
        buf = io.StringIO()
        for k in range(len(table)):
            buf.write(
                f"{fmt(table.lambdas[k])},{fmt(table.mus[k])},{fmt(table.agg_rate[k])},"
                f"{fmt(table.agg_distortion[k])},{fmt(table.agg_time[k])},"
                f"{_selection_cell(table.shot_ids, table.selections[k])}\n"
            )
            if k % 4096 == 4095:
                fh.write(buf.getvalue())
                buf = io.StringIO()
        fh.write(buf.getvalue())


def read_table(path) -> RdtTable:
    cols = {c: [] for c in TABLE_COLUMNS[:5]}
    sels = []
    shot_ids = None
    for lineno, row in _rows(path, "table", TABLE_COLUMNS):
        for c in cols:
            cols[c].append(_num(row, c, float, path, lineno))
        ids, sel = _parse_selection(row["selection"], path, lineno)
        if shot_ids is None:
            shot_ids = ids
        elif ids != shot_ids:
            raise DataError(f"{path}:{lineno}: shot list differs from the first row")
        sels.append(sel)
    if shot_ids is None:
        raise DataError(f"{path}: table has no rows")
    return RdtTable(shot_ids, cols["lambda"], cols["mu"], np.array(sels, dtype=np.int64),
                    cols["R_kbps"], cols["D_mse"], cols["T_s"])


# -- ladder -------------------------------------------------------------------

def write_ladder(
    rungs: Sequence[Rung],
    path,
    meta: Optional[dict] = None,
    reference: Optional[Sequence[Rung]] = None,
    summary: Iterable[str] = (),
    bit_depth: int = 10,
) -> None:
    with _open_write(path) as fh:
        fh.write(_header("ladder", meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LADDER_COLUMNS)
        for k, rung in enumerate(rungs):
            rep = rung.representation
            if rep is None:
                w.writerow([fmt(rung.target), "absent"] + [""] * 8)
                continue
            r_c = ""
            if reference is not None and reference[k].representation is not None:
                r_c = fmt(100.0 * rep.agg_time / reference[k].representation.agg_time)
            pair = rung.multipliers
            w.writerow([
                fmt(rung.target), "ok",
                fmt(pair.lam if pair else None), fmt(pair.mu if pair else None),
                fmt(rep.agg_rate), fmt(rep.agg_distortion), fmt(rep.agg_time),
                fmt(psnr_from_mse(rep.agg_distortion, bit_depth)), r_c,
                _selection_cell(rep.shot_ids, rep.selection),
            ])
        for line in summary:
            fh.write(f"# {line}\n")


def read_ladder(path) -> list[Rung]:
    rungs = []
    for lineno, row in _rows(path, "ladder", LADDER_COLUMNS):
        target = _num(row, "target_kbps", float, path, lineno)
        if row["status"] == "absent":
            rungs.append(Rung(target, None))
            continue
        if row["status"] != "ok":
            raise DataError(f"{path}:{lineno}: unknown status {row['status']!r}")
        ids, sel = _parse_selection(row["selection"], path, lineno)
        rep = Representation(ids, sel, _num(row, "R_kbps", float, path, lineno),
                             _num(row, "D_mse", float, path, lineno),
                             _num(row, "T_s", float, path, lineno))
        pair = None
        if row["lambda"]:
            pair = MultiplierPair(_num(row, "lambda", float, path, lineno), _num(row, "mu", float, path, lineno))
        rungs.append(Rung(target, rep, pair))
    return rungs


def log2_or_nan(v: float) -> float:
    return math.log2(v) if v > 0 else math.nan


def ensure_parent(path) -> Path:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    return p
