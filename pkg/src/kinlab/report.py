"""Deterministic text output: ``summary.txt`` plus one TSV file per table."""

from __future__ import annotations

import math
from pathlib import Path

from .errors import ReportError
from .pipeline import Bundle, Table

__all__ = ["ReportError", "emit_report", "fmt", "render_summary", "render_table"]


def fmt(v) -> str:
    """Stable text form: 12 significant digits for floats, ``nan``/``inf`` spelled out."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    if v is None:
        return "none"
    return str(v)


def render_table(table: Table, config_hash: str) -> str:
    """TSV with a provenance comment; every row carries the config hash."""
    lines = [f"# config_hash\t{config_hash}", "\t".join(("config_hash", *table.columns))]
    lines += ["\t".join((config_hash, *(fmt(v) for v in row))) for row in table.rows]
    return "\n".join(lines) + "\n"


def render_summary(bundle: Bundle) -> str:
    """``key: value`` lines grouped by section, then checks and stage hashes."""
    out = [
        f"experiment: {bundle.config_name}",
        f"config_hash: {bundle.config_hash}",
        f"sections: {len(bundle.sections)}",
    ]
    for name in sorted(bundle.sections):
        out.append("")
        out.append(f"[{name}]")
        for k in sorted(bundle.sections[name]):
            out.append(f"{k}: {fmt(bundle.sections[name][k])}")
    if bundle.checks:
        passed = sum(bool(v) for v in bundle.checks.values())
        out.append("")
        out.append(f"[checks] {passed}/{len(bundle.checks)} pass")
        for k in sorted(bundle.checks):
            out.append(f"{'PASS' if bundle.checks[k] else 'FAIL'} {k}")
    if bundle.tables:
        out.append("")
        out.append("[tables]")
        for k in sorted(bundle.tables):
            out.append(f"{k}: {len(bundle.tables[k].rows)} rows -> tables/{k}.tsv")
    if bundle.hashes:
        out.append("")
        out.append("[provenance]")
        for k in sorted(bundle.hashes):
            out.append(f"{k}: {bundle.hashes[k]}")
    return "\n".join(out) + "\n"


def emit_report(bundle: Bundle, out: str | Path) -> list[Path]:
    """Write ``summary.txt`` and ``tables/<name>.tsv``; return the written paths.

    Raises
    ------
    ReportError
        If ``out`` cannot be created or written.
    """
    out = Path(out)
    try:
        (out / "tables").mkdir(parents=True, exist_ok=True)
        written = [out / "summary.txt"]
        written[0].write_text(render_summary(bundle))
        for name in sorted(bundle.tables):
            p = out / "tables" / f"{name}.tsv"
            p.write_text(render_table(bundle.tables[name], bundle.config_hash))
            written.append(p)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}", stage="report") from exc
    return written
