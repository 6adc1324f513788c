"""Report emitters: CSV, JSON, and the superscript-style text table.

All three are byte-stable: identical curves produce identical files.  The
text table renders each cell as ``(clean)certified`` in percent, clean
accuracy raised in front of the certified value.
"""

from __future__ import annotations

import json
from pathlib import Path

from .curves import CurvePoint

FORMAT_EXTENSIONS = {"csv": ".csv", "json": ".json", "table": ".txt"}


def format_cell(clean_pct: float, certified_pct: float) -> str:
    """One table cell, percentages with one decimal: ``(73.8)73.8``."""
    return f"({clean_pct:.1f}){certified_pct:.1f}"


def curves_to_csv(curves: dict[str, list[CurvePoint]]) -> str:
    lines = ["method,sigma_used,radius,certified_acc,clean_acc"]
    for method in sorted(curves):
        for p in curves[method]:
            lines.append(
                f"{method},{p.sigma_used!r},{p.radius!r},"
                f"{p.certified_accuracy!r},{p.clean_accuracy!r}"
            )
    return "\n".join(lines) + "\n"


def curves_to_json(curves: dict[str, list[CurvePoint]]) -> str:
    payload = {
        method: [
            {
                "radius": p.radius,
                "certified_accuracy": p.certified_accuracy,
                "clean_accuracy": p.clean_accuracy,
                "sigma_used": p.sigma_used,
            }
            for p in points
        ]
        for method, points in sorted(curves.items())
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def curves_from_json(text: str) -> dict[str, list[CurvePoint]]:
    payload = json.loads(text)
    return {
        method: [
            CurvePoint(
                radius=p["radius"],
                certified_accuracy=p["certified_accuracy"],
                clean_accuracy=p["clean_accuracy"],
                sigma_used=p["sigma_used"],
            )
            for p in points
        ]
        for method, points in payload.items()
    }


def curves_to_table(curves: dict[str, list[CurvePoint]]) -> str:
    """Fixed-width text table of (clean)certified percent cells."""
    if not curves:
        raise ValueError("no curves to render")
    methods = sorted(curves)
    grid = [p.radius for p in curves[methods[0]]]
    for method in methods[1:]:
        if [p.radius for p in curves[method]] != grid:
            raise ValueError("curves disagree on the radius grid")
    name_width = max(len("method"), *(len(m) for m in methods))
    cells = {
        method: [
            format_cell(100.0 * p.clean_accuracy, 100.0 * p.certified_accuracy)
            for p in curves[method]
        ]
        for method in methods
    }
    col_widths = [
        max(len(f"r={r:g}"), *(len(cells[m][i]) for m in methods))
        for i, r in enumerate(grid)
    ]
    lines = ["certified accuracy (%) at L2 radius, clean accuracy raised in front"]
    header = "method".ljust(name_width) + "  " + "  ".join(
        f"r={r:g}".rjust(w) for r, w in zip(grid, col_widths)
    )
    lines.append(header)
    lines.append("-" * len(header))
    for method in methods:
        row = method.ljust(name_width) + "  " + "  ".join(
            cell.rjust(w) for cell, w in zip(cells[method], col_widths)
        )
        lines.append(row)
    return "\n".join(lines) + "\n"


def emit_report(
    curves: dict[str, list[CurvePoint]],
    fmt: str,
    out_path: str | Path,
) -> Path:
    """Write one report file; returns its path."""
    if not curves:
        raise ValueError("no curves to emit")
    if fmt == "csv":
        text = curves_to_csv(curves)
    elif fmt == "json":
        text = curves_to_json(curves)
    elif fmt == "table":
        text = curves_to_table(curves)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    return out_path
