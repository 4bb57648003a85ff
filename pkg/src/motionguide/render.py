"""Deterministic layout rendering: SVG panels or ASCII grids."""

from __future__ import annotations

from .graph import MotionCategory
from .layout import SceneLayout

PANEL = 180
MARGIN = 10

CATEGORY_COLORS = {
    MotionCategory.MOTIONLESS: "#4878cf",
    MotionCategory.RIGID: "#6acc65",
    MotionCategory.NONRIGID: "#d65f5f",
}


def render_svg(layout: SceneLayout) -> str:
    """One panel per frame, one labeled rectangle per track."""
    width = layout.frames * (PANEL + MARGIN) + MARGIN
    height = PANEL + 2 * MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
    ]
    for f in range(layout.frames):
        ox = MARGIN + f * (PANEL + MARGIN)
        parts.append(
            f'<rect x="{ox}" y="{MARGIN}" width="{PANEL}" height="{PANEL}" '
            f'fill="white" stroke="#999"/>')
        parts.append(
            f'<text x="{ox + 4}" y="{MARGIN + 14}" font-size="12" '
            f'fill="#666">f{f + 1}</text>')
        for track in layout.tracks:
            b = track.boxes[f]
            color = CATEGORY_COLORS[track.category]
            x = ox + b.x_min * PANEL
            y = MARGIN + b.y_min * PANEL
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{b.width * PANEL:.2f}" '
                f'height="{b.height * PANEL:.2f}" fill="{color}" '
                f'fill-opacity="0.35" stroke="{color}"/>')
            parts.append(
                f'<text x="{x + 2:.2f}" y="{y + 12:.2f}" font-size="10" '
                f'fill="{color}">{track.instance_id}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_ascii(layout: SceneLayout, rows: int = 12, cols: int = 32) -> str:
    """Per-frame character grids; boxes drawn with the instance id mod 10."""
    out: list[str] = []
    for f in range(layout.frames):
        grid = [["." for _ in range(cols)] for _ in range(rows)]
        for track in layout.tracks:
            b = track.boxes[f]
            x0 = int(b.x_min * cols)
            x1 = max(x0 + 1, int(round(b.x_max * cols)))
            y0 = int(b.y_min * rows)
            y1 = max(y0 + 1, int(round(b.y_max * rows)))
            ch = str(track.instance_id % 10)
            for y in range(y0, min(y1, rows)):
                for x in range(x0, min(x1, cols)):
                    grid[y][x] = ch
        out.append(f"frame {f + 1}")
        out.extend("".join(row) for row in grid)
        out.append("")
    return "\n".join(out)
