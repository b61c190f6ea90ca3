"""Render a B-scan with its surfaces drawn in distinct colors.

The base image is the 8-bit grayscale slice; each surface is drawn at
floor(position + 0.5) per column from a fixed palette, nothing drawn at
INVALID columns. Output is a lossless RGB PNG.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .core import Sample
from .errors import SliceOutOfRange

__all__ = ["PALETTE", "render_overlay"]

PALETTE: tuple[tuple[int, int, int], ...] = (
    (255, 221, 0),    # yellow
    (0, 200, 80),     # green
    (40, 90, 255),    # blue
    (255, 80, 80),    # red
    (0, 210, 210),    # cyan
    (235, 0, 235),    # magenta
    (255, 150, 0),    # orange
    (150, 90, 255),   # violet
    (140, 255, 60),   # lime
    (255, 120, 200),  # pink
    (0, 130, 130),    # teal
    (170, 120, 60),   # brown
)


def surface_color(index: int) -> tuple[int, int, int]:
    return PALETTE[index % len(PALETTE)]


def render_overlay(sample: Sample, slice_index: int, out_path: str | Path) -> Path:
    """Write the overlay PNG for one slice; deterministic pixel for pixel."""
    if not 0 <= slice_index < sample.slice_count:
        raise SliceOutOfRange(f"slice {slice_index} outside 0..{sample.slice_count - 1}")
    gray = np.clip(np.floor(sample.volume.pixels[slice_index] * 255.0 + 0.5), 0, 255).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1)

    cols = np.arange(sample.width)
    pos = sample.surfaces.positions[slice_index]
    for b in range(sample.surfaces.surface_count):
        rows = pos[b]
        ok = np.isfinite(rows)
        if not ok.any():
            continue
        r = np.floor(rows[ok] + 0.5).astype(np.int64)
        inside = (r >= 1) & (r <= sample.height)
        rgb[r[inside] - 1, cols[ok][inside]] = surface_color(b)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb, mode="RGB").save(out_path, format="PNG")
    return out_path
