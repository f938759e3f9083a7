"""Overlaid true-vs-predicted histograms rendered as plain SVG."""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from action_signal.utils.logger import logger

WIDTH = 640
HEIGHT = 400
MARGIN = 48
TRUE_COLOR = "#1f77b4"
PRED_COLOR = "#d62728"

PathLike = Union[str, Path]


def histogram_counts(
    true_values: np.ndarray, predicted: np.ndarray, bins: int = 50
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Counts of both samples over ``bins`` equal bins spanning their pooled min-max.

    Returns:
        Tuple of (edges (bins + 1,), true counts, predicted counts)
    """
    pooled = np.concatenate(
        [np.asarray(true_values, dtype=np.float64), np.asarray(predicted, dtype=np.float64)]
    )
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    true_counts, _ = np.histogram(true_values, bins=edges)
    pred_counts, _ = np.histogram(predicted, bins=edges)
    return edges, true_counts, pred_counts


def _step_path(counts: np.ndarray, x0: float, bar: float, y_base: float, scale: float) -> str:
    points = [f"M {x0:.3f} {y_base:.3f}"]
    for i, c in enumerate(counts):
        y = y_base - c * scale
        points.append(f"L {x0 + i * bar:.3f} {y:.3f}")
        points.append(f"L {x0 + (i + 1) * bar:.3f} {y:.3f}")
    points.append(f"L {x0 + len(counts) * bar:.3f} {y_base:.3f}")
    return " ".join(points)


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_histogram_svg(
    edges: np.ndarray,
    true_counts: np.ndarray,
    pred_counts: np.ndarray,
    title: str,
    labels: Sequence[str] = ("true", "predicted"),
) -> str:
    """SVG document with the two count outlines drawn over the same axes."""
    plot_w = WIDTH - 2 * MARGIN
    plot_h = HEIGHT - 2 * MARGIN
    n_bins = len(true_counts)
    peak = max(int(np.max(true_counts)), int(np.max(pred_counts)), 1)
    bar = plot_w / n_bins
    scale = plot_h / peak
    base = HEIGHT - MARGIN

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{_escape(title)}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="{MARGIN / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{_escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{base}" x2="{WIDTH - MARGIN}" y2="{base}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{base}" stroke="black"/>',
        f'<text x="{MARGIN}" y="{base + 16}" font-family="sans-serif" '
        f'font-size="10">{edges[0]:.3g}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{base + 16}" text-anchor="end" font-family="sans-serif" '
        f'font-size="10">{edges[-1]:.3g}</text>',
        f'<text x="{MARGIN - 4}" y="{MARGIN + 4}" text-anchor="end" font-family="sans-serif" '
        f'font-size="10">{peak}</text>',
    ]
    outlines = (("true", true_counts, TRUE_COLOR), ("predicted", pred_counts, PRED_COLOR))
    for series, counts, color in outlines:
        lines.append(
            f'<path class="{series}" data-counts="{" ".join(str(int(c)) for c in counts)}" '
            f'd="{_step_path(counts, MARGIN, bar, base, scale)}" '
            f'fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    for i, (label, color) in enumerate(zip(labels, (TRUE_COLOR, PRED_COLOR))):
        y = MARGIN + 14 * i
        lines.append(
            f'<text x="{WIDTH - MARGIN}" y="{y}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11" fill="{color}">{_escape(label)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_histogram(
    path: PathLike,
    true_values: np.ndarray,
    predicted: np.ndarray,
    title: str,
    bins: int = 50,
) -> Optional[Path]:
    """Render one histogram file; skipped with a warning when a sample is empty."""
    if len(true_values) == 0 or len(predicted) == 0:
        logger.warning(f"No samples for histogram '{title}', skipping")
        return None
    edges, true_counts, pred_counts = histogram_counts(true_values, predicted, bins)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(render_histogram_svg(edges, true_counts, pred_counts, title))
    return path


def parse_counts(svg_text: str) -> List[List[int]]:
    """Counts embedded in the outlines of a rendered histogram (true first)."""
    import xml.etree.ElementTree as ET

    root = ET.fromstring(svg_text)
    paths = [el for el in root.iter() if el.tag.endswith("path")]
    return [[int(c) for c in el.attrib["data-counts"].split()] for el in paths]
