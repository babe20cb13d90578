"""Machine-readable run outputs: manifests, tables, and the merged report.

Every table is written twice: a comma-separated file for plotting and a
JSON sidecar carrying the same values at full precision plus the hash of
the manifest that produced them, so each result file points back to
exactly one recorded run.  Tables and sidecars are byte-identical across
reruns with the same inputs, seed, and version; the manifest file also
records wall-clock timestamps, which are excluded from its hash.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import hashlib
import json
import math
import os
from pathlib import Path

__all__ = [
    "RunManifest",
    "build_manifest",
    "canonical_json",
    "read_output_dir",
    "render_report",
    "table_rows",
    "write_manifest",
    "write_report",
    "write_table",
]

_HASHED_FIELDS = ("command", "config", "seed", "version", "covariate_mapping")


def _sanitize(value):
    """JSON-encodable copy; non-finite floats become None (JSON null)."""
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _sanitize(dataclasses.asdict(value))
    if hasattr(value, "item"):  # numpy scalars
        return _sanitize(value.item())
    return str(value)


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, nulls for non-finite."""
    return json.dumps(
        _sanitize(obj), sort_keys=True, separators=(",", ":"), allow_nan=False
    )


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Provenance record for one command invocation.

    The hash covers command, config, seed, version, and the covariate
    mapping; timestamps stay outside it so rerunning a run reproduces
    the same hash.
    """

    command: str
    config: dict
    seed: int
    version: str
    covariate_mapping: dict
    created_utc: str
    finished_utc: str | None = None

    @property
    def run_hash(self) -> str:
        payload = {f: getattr(self, f) for f in _HASHED_FIELDS}
        digest = hashlib.sha256(canonical_json(payload).encode("utf-8"))
        return digest.hexdigest()[:16]


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(
        timespec="seconds"
    )


def build_manifest(
    command: str,
    config: dict,
    seed: int,
    version: str,
    covariate_mapping: dict | None = None,
) -> RunManifest:
    return RunManifest(
        command=command,
        config=_sanitize(config),
        seed=int(seed),
        version=version,
        covariate_mapping=_sanitize(covariate_mapping or {}),
        created_utc=_utc_now(),
    )


def write_manifest(out_dir, manifest: RunManifest) -> Path:
    """Persist the manifest as ``manifest_<command>_<hash>.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = dataclasses.asdict(manifest)
    record["finished_utc"] = manifest.finished_utc or _utc_now()
    record["manifest_hash"] = manifest.run_hash
    path = out / f"manifest_{manifest.command}_{manifest.run_hash}.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def table_rows(records) -> list[dict]:
    """Dataclass instances (or dicts) to a list of plain row dicts."""
    rows = []
    for rec in records:
        if dataclasses.is_dataclass(rec) and not isinstance(rec, type):
            rows.append(_sanitize(dataclasses.asdict(rec)))
        else:
            rows.append(_sanitize(dict(rec)))
    return rows


def _format_cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_table(
    out_dir, name: str, records, manifest: RunManifest, meta: dict | None = None
) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and its full-precision JSON sidecar.

    Row dicts must share a key set; the column order of the first row
    is used.  ``meta`` carries run-level facts (row accounting, censoring
    bounds, failure counts) into the sidecar.
    """
    rows = table_rows(records)
    if not rows:
        raise ValueError(f"table {name!r} has no rows")
    columns = list(rows[0])
    for row in rows:
        if list(row) != columns:
            raise ValueError(f"table {name!r} rows have inconsistent columns")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])

    sidecar = {
        "table": name,
        "manifest_hash": manifest.run_hash,
        "columns": columns,
        "rows": rows,
        "meta": _sanitize(meta or {}),
    }
    json_path = out / f"{name}.json"
    json_path.write_text(
        json.dumps(sidecar, indent=2, sort_keys=True, allow_nan=False) + "\n"
    )
    return csv_path, json_path


def read_output_dir(out_dir) -> dict:
    """Collect manifests, table sidecars, and pairing problems from a dir."""
    out = Path(out_dir)
    manifests: list[dict] = []
    tables: list[dict] = []
    problems: list[str] = []
    if out.is_dir():
        for path in sorted(out.glob("*.json")):
            try:
                doc = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                problems.append(f"{path.name}: unreadable ({exc})")
                continue
            if not isinstance(doc, dict):
                continue
            if "manifest_hash" in doc and "command" in doc:
                doc["_file"] = path.name
                manifests.append(doc)
            elif "table" in doc and "rows" in doc:
                doc["_file"] = path.name
                tables.append(doc)
    known = {m["manifest_hash"] for m in manifests}
    for table in tables:
        csv_name = f"{table['table']}.csv"
        if not (out / csv_name).exists():
            problems.append(f"{table['_file']}: missing companion {csv_name}")
        if table.get("manifest_hash") not in known:
            problems.append(
                f"{table['_file']}: references manifest "
                f"{table.get('manifest_hash')!r} not present in the directory"
            )
    return {"manifests": manifests, "tables": tables, "problems": problems}


_DIAG_KEYS = ("converged", "n_used", "n_failed")


def _diagnostic_lines(table: dict) -> list[str]:
    lines = []
    rows = table["rows"]
    for col in table["columns"]:
        if not any(col == k or col.startswith(f"{k}_") for k in _DIAG_KEYS):
            continue
        values = [r[col] for r in rows if r[col] is not None]
        if not values:
            continue
        total = sum(values)
        lines.append(f"  {col}: total {total} over {len(values)} row(s)")
    return lines


def _render_value(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return format(value, ".4g")
    if isinstance(value, bool):
        return str(int(value))
    return str(value)


def render_report(out_dir) -> str:
    """Human-readable summary of every run recorded in a directory."""
    found = read_output_dir(out_dir)
    lines = ["Run report", "=========="]
    if not found["manifests"] and not found["tables"]:
        lines.append("")
        lines.append("Nothing to report: no manifests or tables found.")
        return "\n".join(lines) + "\n"

    if found["problems"]:
        lines.append("")
        lines.append("Missing or inconsistent inputs:")
        lines.extend(f"  - {p}" for p in found["problems"])

    if found["manifests"]:
        lines.append("")
        lines.append("Runs")
        lines.append("----")
        for m in found["manifests"]:
            lines.append(
                f"- {m['command']} [{m['manifest_hash']}] seed {m['seed']}, "
                f"version {m['version']}, created {m['created_utc']}"
            )

    for table in found["tables"]:
        lines.append("")
        lines.append(f"Table: {table['table']} [manifest {table['manifest_hash']}]")
        lines.append("-" * max(len(lines[-1]), 4))
        columns = table["columns"]
        rows = table["rows"]
        cells = [[_render_value(r[c]) for c in columns] for r in rows]
        widths = [
            max(len(col), *(len(row[i]) for row in cells)) if cells else len(col)
            for i, col in enumerate(columns)
        ]
        lines.append("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
        for row in cells:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        diag = _diagnostic_lines(table)
        if diag:
            lines.append("convergence diagnostics:")
            lines.extend(diag)
        meta = table.get("meta") or {}
        if meta:
            lines.append("run facts:")
            for key in sorted(meta):
                lines.append(f"  {key}: {_render_value(meta[key])}")
    return "\n".join(lines) + "\n"


def write_report(out_dir, filename: str = "report.txt") -> Path:
    """Render and persist the consolidated report."""
    text = render_report(out_dir)
    path = Path(out_dir) / filename
    os.makedirs(out_dir, exist_ok=True)
    path.write_text(text)
    return path
