"""Self-contained SVG line plots, written without a plotting dependency.

Each plot is a single SVG document: a frame, one polyline per series, axis
labels, and a metadata element carrying the raw series as JSON so the plot
file parses back to the exact data it was drawn from.
"""

import json
import xml.etree.ElementTree as ET

WIDTH, HEIGHT = 640, 440
MARGIN = 60
PALETTE = ("#c0392b", "#2980b9", "#8e44ad", "#27ae60", "#f39c12", "#16a085")

_SVG_NS = "http://www.w3.org/2000/svg"


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo
    if span == 0:
        return [0.5 * (out_lo + out_hi) for _ in values]
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def write_line_plot(path, series, title: str = "", xlabel: str = "",
                    ylabel: str = "") -> None:
    """Write polyline plot of `series`, a list of (label, xs, ys) triples."""
    if not series:
        raise ValueError("need at least one series")
    for label, xs, ys in series:
        if len(xs) != len(ys) or len(xs) == 0:
            raise ValueError(f"series {label!r} must have matching nonempty x and y")

    all_x = [float(x) for _, xs, _ in series for x in xs]
    all_y = [float(y) for _, _, ys in series for y in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)

    payload = json.dumps({
        "title": title, "xlabel": xlabel, "ylabel": ylabel,
        "series": [{"label": str(label),
                    "x": [float(v) for v in xs],
                    "y": [float(v) for v in ys]} for label, xs, ys in series],
    }, sort_keys=True)

    lines = [
        f'<svg xmlns="{_SVG_NS}" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<metadata>{payload}</metadata>",
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="30" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 15}" text-anchor="middle" '
        f'font-size="12">{xlabel}</text>',
        f'<text x="18" y="{HEIGHT // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {HEIGHT // 2})">{ylabel}</text>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 16}" font-size="10">{x_lo:g}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 16}" text-anchor="end" '
        f'font-size="10">{x_hi:g}</text>',
        f'<text x="{MARGIN - 4}" y="{HEIGHT - MARGIN}" text-anchor="end" '
        f'font-size="10">{y_lo:g}</text>',
        f'<text x="{MARGIN - 4}" y="{MARGIN + 4}" text-anchor="end" '
        f'font-size="10">{y_hi:g}</text>',
    ]
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        px = _scale([float(v) for v in xs], x_lo, x_hi, MARGIN, WIDTH - MARGIN)
        py = _scale([float(v) for v in ys], y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        lines.append(f'<text x="{MARGIN + 8}" y="{MARGIN + 16 + 14 * i}" '
                     f'font-size="11" fill="{color}">{label}</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_line_plot(path) -> dict:
    """Validate a plot file and recover the exact series it encodes.

    Requires a well-formed SVG root, at least one polyline, and a metadata
    payload whose series are mirrored by the drawn polylines.
    """
    tree = ET.parse(path)
    root = tree.getroot()
    if root.tag != f"{{{_SVG_NS}}}svg":
        raise ValueError(f"{path}: root element is {root.tag}, not svg")
    polylines = root.findall(f"{{{_SVG_NS}}}polyline")
    if not polylines:
        raise ValueError(f"{path}: plot contains no polyline")
    for poly in polylines:
        for pair in poly.get("points", "").split():
            x, y = pair.split(",")
            float(x), float(y)
    meta = root.find(f"{{{_SVG_NS}}}metadata")
    if meta is None or not meta.text:
        raise ValueError(f"{path}: missing metadata payload")
    doc = json.loads(meta.text)
    if len(doc["series"]) != len(polylines):
        raise ValueError(f"{path}: metadata series do not match drawn polylines")
    return doc
