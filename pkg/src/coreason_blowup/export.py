# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

"""
Versioned CSV and JSON artifacts of a run.

Every CSV begins with a schema comment line and a header row; floats are written in their
shortest round-trip form so identical runs produce identical bytes.
"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from coreason_blowup.evolve import Snapshot
from coreason_blowup.exceptions import BlowupLabError, DomainError
from coreason_blowup.mesh import LevelSnapshot
from coreason_blowup.models import Bracket, DiagnosticsRow, SelfSimilarProfile, SweepResult
from coreason_blowup.utils.logger import logger

SCHEMA_PREFIX = "# coreason_blowup"
SCHEMA_VERSION = "v1"

SERIES_COLUMNS = ["t", "w_rr0", "lambda", "E_cone", "E_total", "flux_out", "depth", "tau", "E_cone_kinetic"]
LEVEL_COLUMNS = ["r", "w", "wt"]
PROFILE_COLUMNS = ["eta", "W", "Wprime"]
RESCALED_COLUMNS = ["eta", "ln_eta", "w"]
BRACKET_COLUMNS = ["trial", "amplitude", "outcome"]
SWEEP_COLUMNS = ["epsilon", "amplitude", "outcome", "value", "resolved", "note"]
RESCALED_POINTS = 200
RESCALED_ETA_MIN = 1e-3


class SchemaError(BlowupLabError, ValueError):
    """Raised when a CSV does not carry the expected schema line."""


def schema_line(schema: str) -> str:
    return f"{SCHEMA_PREFIX}:{schema}:{SCHEMA_VERSION}"


def format_value(value: Any) -> str:
    """Cells: repr for floats, empty for None, lowercase booleans."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _render(rows: Iterable[Sequence[Any]], columns: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(value) for value in row])
    return buffer.getvalue()


def write_csv(
    path: Path,
    schema: str,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    preamble: Sequence[str] = (),
) -> Path:
    """
    Writes a versioned CSV table.

    Args:
        path: Destination; parent directories are created.
        schema: Schema identifier recorded in the first line.
        columns: Header row.
        rows: Data rows.
        preamble: Extra comment lines (without the leading '#') written after the schema line.

    Returns:
        The path written.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    head = [schema_line(schema)] + [f"# {line}" for line in preamble]
    path.write_text("\n".join(head) + "\n" + _render(rows, columns), encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def read_csv(path: Path, schema: str) -> Tuple[List[str], List[str], List[List[str]]]:
    """
    Reads a table written by write_csv.

    Returns:
        (preamble comment lines, header, rows as strings).

    Raises:
        SchemaError: If the schema line is missing or names another schema or version.
    """
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != schema_line(schema):
        found = lines[0] if lines else "<empty file>"
        raise SchemaError(f"{path}: expected schema line {schema_line(schema)!r}, found {found!r}")
    preamble: List[str] = []
    body_start = 1
    while body_start < len(lines) and lines[body_start].startswith("#"):
        preamble.append(lines[body_start][1:].strip())
        body_start += 1
    table = list(csv.reader(lines[body_start:]))
    if not table:
        raise SchemaError(f"{path}: header row missing")
    return preamble, table[0], table[1:]


def write_series(path: Path, rows: Sequence[DiagnosticsRow]) -> Path:
    return write_csv(
        path,
        "series",
        SERIES_COLUMNS,
        (
            (row.t, row.w_rr0, row.lam, row.E_cone, row.E_total, row.flux_out, row.depth, row.tau, row.E_cone_kinetic)
            for row in rows
        ),
    )


def read_series(path: Path) -> List[DiagnosticsRow]:
    """Parses a series CSV back into diagnostics rows."""
    _, header, rows = read_csv(path, "series")
    if header != SERIES_COLUMNS:
        raise SchemaError(f"{path}: unexpected series columns {header}")

    def cell(text: str) -> Optional[float]:
        return float(text) if text else None

    parsed: List[DiagnosticsRow] = []
    for row in rows:
        values = dict(zip(SERIES_COLUMNS, row, strict=True))
        parsed.append(
            DiagnosticsRow(
                t=float(values["t"]),
                w_rr0=float(values["w_rr0"]),
                lam=cell(values["lambda"]),
                E_total=float(values["E_total"]),
                flux_out=float(values["flux_out"]),
                depth=int(values["depth"]),
                tau=cell(values["tau"]),
                E_cone=cell(values["E_cone"]),
                E_cone_kinetic=cell(values["E_cone_kinetic"]),
            )
        )
    return parsed


def write_level_snapshot(path: Path, levels: Sequence[LevelSnapshot]) -> Path:
    """One block per level: a '# level depth= dr= time=' line followed by (r, w, wt) rows."""
    path.parent.mkdir(parents=True, exist_ok=True)
    parts = [schema_line("level_snapshot")]
    for level in levels:
        parts.append(f"# level depth={level.depth} dr={level.dr!r} time={level.time!r}")
        parts.append(_render(zip(level.r, level.w, level.wt, strict=True), LEVEL_COLUMNS).rstrip("\n"))
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def write_profile(path: Path, profile: SelfSimilarProfile) -> Path:
    preamble = [f"d={profile.d} b={profile.b!r} c={profile.c!r} W1={profile.w1!r} residual={profile.residual!r}"]
    return write_csv(path, "profile", PROFILE_COLUMNS, profile.samples, preamble)


def write_bracket(path: Path, bracket: Bracket) -> Path:
    preamble = [f"a_lo={bracket.a_lo!r} a_hi={bracket.a_hi!r} limited={format_value(bracket.limited)}"]
    rows = ((index, trial.amplitude, trial.outcome.value) for index, trial in enumerate(bracket.history))
    return write_csv(path, "bracket", BRACKET_COLUMNS, rows, preamble)


def write_sweep(path: Path, sweep: SweepResult) -> Path:
    rows = (
        (m.epsilon, m.amplitude, m.outcome.value, m.value, m.resolved, m.note or "")
        for m in sweep.members
    )
    return write_csv(path, "sweep", SWEEP_COLUMNS, rows, [f"contaminated={format_value(sweep.contaminated)}"])


def emit_rescaled_snapshots(
    snapshots: Sequence[Snapshot], T: float, directory: Path, points: int = RESCALED_POINTS
) -> List[Path]:
    """
    Writes w(t, (T - t) eta) on log-spaced eta in (0, 1] for every stored snapshot with t < T.

    Snapshots taken before a scale is defined are skipped with a notice, as are snapshots whose
    light cone extends past the grid.
    """
    eta = np.geomspace(RESCALED_ETA_MIN, 1.0, points)
    written: List[Path] = []
    for snapshot in snapshots:
        gap = T - snapshot.t
        if snapshot.lam is None:
            logger.warning(f"Skipping rescaled snapshot {snapshot.index} at t={snapshot.t!r}: no scale defined yet")
            continue
        if gap <= 0.0 or gap > snapshot.state.r[-1]:
            logger.warning(f"Skipping rescaled snapshot {snapshot.index}: light cone radius {gap!r} out of range")
            continue
        w = snapshot.state.sample(gap * eta)
        preamble = [f"t={snapshot.t!r} T={T!r} lambda={snapshot.lam!r}"]
        path = directory / f"rescaled_{snapshot.index:04d}.csv"
        written.append(write_csv(path, "rescaled", RESCALED_COLUMNS, zip(eta, np.log(eta), w, strict=True), preamble))
    logger.info(f"Wrote {len(written)} rescaled snapshot(s) to {directory}")
    return written


def write_level_snapshots(snapshots: Sequence[Snapshot], directory: Path) -> List[Path]:
    return [
        write_level_snapshot(directory / f"level_snapshot_{snapshot.index:04d}.csv", snapshot.levels)
        for snapshot in snapshots
    ]


def _json_ready(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {key: _json_ready(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_json_ready(item) for item in value]
    return value


def write_summary(path: Path, summary: BaseModel) -> Path:
    """JSON with sorted keys; non-finite floats are written as strings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _json_ready(summary.model_dump(mode="json"))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote summary {path}")
    return path


def check_relative(path: Path, root: Path) -> str:
    """Path of an artifact relative to the output directory."""
    try:
        return path.relative_to(root).as_posix()
    except ValueError as exc:
        raise DomainError(f"{path} is not inside {root}") from exc
