"""Report artifacts and the run manifest."""

from action_signal.reporting.manifest import MANIFEST_FILE, RunManifest
from action_signal.reporting.svg import (
    histogram_counts,
    parse_counts,
    render_histogram_svg,
    write_histogram,
)
from action_signal.reporting.tables import EmissionResult, emit_histograms, emit_report

__all__ = [
    "MANIFEST_FILE",
    "RunManifest",
    "histogram_counts",
    "parse_counts",
    "render_histogram_svg",
    "write_histogram",
    "EmissionResult",
    "emit_histograms",
    "emit_report",
]
