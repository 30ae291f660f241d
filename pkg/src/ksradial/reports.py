"""CSV, JSON and SVG output.

Every file carries the version stamp and the echoed run configuration.
Floats are written with ``repr`` (shortest round-trip form), and nothing
time- or host-dependent is written, so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .diagnostics import record_columns, record_row

__all__ = ["version_stamp", "jsonable", "dump_json", "write_json", "write_records_csv", "write_table_csv", "write_svg"]

CSV_FORMAT = 1


def version_stamp() -> str:
    from . import __version__

    return f"ksradial {__version__}"


def jsonable(x):
    """Recursively convert to JSON-safe values; NaN becomes null and infinities strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        x = x.item()
    if isinstance(x, float):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    return x


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj, config: dict) -> Path:
    path = Path(path)
    doc = {"version": version_stamp(), "config": config, **obj}
    path.write_text(dump_json(doc))
    return path


def _header(config: dict, kind: str) -> list[str]:
    return [
        f"# {version_stamp()} {kind} v{CSV_FORMAT}",
        "# config " + json.dumps(jsonable(config), sort_keys=True, separators=(",", ":")),
    ]


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


def _write_csv(path, header_lines, columns, rows) -> Path:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def write_records_csv(path, records, lp_set, config: dict, check_ids=()) -> Path:
    """One row per diagnostic record, fixed column order."""
    lp_set = tuple(sorted(float(p) for p in lp_set))
    rows = [record_row(r, lp_set, check_ids) for r in records]
    return _write_csv(path, _header(config, "records"), record_columns(lp_set, check_ids), rows)


def write_table_csv(path, columns, rows, config: dict, kind: str) -> Path:
    return _write_csv(path, _header(config, kind), list(columns), rows)


def write_svg(path, records, config: dict, title: str = "") -> Path:
    """Sup norm, mass and their bounds against time.  Needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = [r.t for r in records]
    with matplotlib.rc_context({"svg.hashsalt": "ksradial", "svg.fonttype": "none"}):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        ax1.plot(t, [r.linf for r in records], label="max u")
        if any(not math.isnan(r.bound_linf) for r in records):
            ax1.plot(t, [r.bound_linf for r in records], "--", label="sup bound")
        ax1.set_xlabel("t")
        ax1.legend()
        ax2.plot(t, [r.mass for r in records], label="mass")
        ax2.plot(t, [r.bound_mass for r in records], "--", label="mass bound")
        ax2.set_xlabel("t")
        ax2.legend()
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        meta = {
            "Date": None,
            "Creator": version_stamp(),
            "Description": json.dumps(jsonable(config), sort_keys=True),
        }
        fig.savefig(path, format="svg", metadata=meta)
        plt.close(fig)
    return Path(path)
