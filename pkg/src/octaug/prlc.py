"""Copy a block of labeled layers into the unlabeled background.

A contiguous run of l layers is cropped over a W-column window and pasted
at a shared (row, column) offset into the background, the pixels above
the topmost or below the bottommost valid surface of each column. Labels
are never touched: the paste deliberately creates structure the labels do
not explain, which is the point of the augmentation.

For volume data the draw happens once: l, W, the layer block, the window
and the paste offset are shared by all slices, while the copied pixels
come from each slice's own window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Sample, SurfaceSet
from .errors import EmptyPatch, InvalidL, NoSpace
from .seeding import Stream

__all__ = [
    "LayerPatch",
    "PrlcDraw",
    "PrlcParams",
    "apply_prlc",
    "apply_prlc_detailed",
    "choose_layer_block",
    "extract_patch",
    "find_paste_anchor",
    "paste_patch",
]


@dataclass(frozen=True)
class PrlcParams:
    """Draw ranges: block size l, window width W, and the restart budget.

    w_range upper bound None means "full image width". One initial attempt
    plus max_restarts redraws of (target layer, window, anchor) are made
    before giving up and returning the sample unchanged; l and W stay
    fixed across restarts because they are the augmentation's parameters,
    not part of the restarted placement process.
    """

    l_range: tuple[int, int] = (1, 3)
    w_range: tuple[int, int | None] = (20, None)
    max_restarts: int = 10

    def __post_init__(self):
        l_lo, l_hi = self.l_range
        if not 1 <= l_lo <= l_hi:
            raise InvalidL(f"bad layer-count range {self.l_range}")
        w_lo, w_hi = self.w_range
        if w_lo < 1 or (w_hi is not None and w_hi < w_lo):
            raise ValueError(f"bad window-width range {self.w_range}")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")

    def resolve_w(self, width: int) -> tuple[int, int]:
        w_lo, w_hi = self.w_range
        w_hi = width if w_hi is None else w_hi
        if not 1 <= w_lo <= w_hi <= width:
            raise ValueError(f"window range [{w_lo}, {w_hi}] infeasible for width {width}")
        return w_lo, w_hi


@dataclass(frozen=True, eq=False)
class LayerPatch:
    """Pixels of a layer block over a column window, per slice.

    start_col is the 1-based first window column. top/bottom give, per
    slice and window column, the 1-based first and last copied row
    (ceil of the upper surface, floor of the lower); columns where a
    bounding surface is invalid, or the rounded bounds cross, carry
    top > bottom and are excluded from the mask. pixels is the rectangular
    (slices, rows, W) crop starting at image row row0 that covers every
    masked span.
    """

    start_col: int
    width: int
    layer_interval: tuple[int, int]
    row0: int
    pixels: np.ndarray
    top: np.ndarray
    bottom: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return self.top <= self.bottom

    def column_extents(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Across-slice hull per window column: (has_any, min top, max bottom)."""
        m = self.mask
        has = m.any(axis=0)
        top = np.where(m, self.top, np.iinfo(np.int64).max).min(axis=0)
        bottom = np.where(m, self.bottom, np.iinfo(np.int64).min).max(axis=0)
        return has, top, bottom


def choose_layer_block(layer_count: int, l: int, rng: Stream) -> tuple[int, int]:
    """Contiguous interval of exactly l layers around a uniform target.

    Returns 0-based (first, last). The target layer is drawn uniformly;
    the block is centered on it and shifted inward at the edges so it
    always stays inside [0, layer_count - 1].
    """
    if l > layer_count:
        raise InvalidL(f"requested {l} layers but only {layer_count} exist")
    if l < 1:
        raise InvalidL(f"requested block of {l} layers")
    target = rng.randint(0, layer_count - 1)
    first = min(max(target - (l - 1) // 2, 0), layer_count - l)
    return first, first + l - 1


def extract_patch(sample: Sample, interval: tuple[int, int], start_col: int, w: int) -> LayerPatch:
    """Crop the pixels of a layer block over window columns [start_col, start_col + w - 1].

    Per slice and column, rows ceil(upper surface) .. floor(lower surface)
    are copied, upper/lower being the surfaces bounding the block. Columns
    with an invalid bounding surface contribute nothing. Raises EmptyPatch
    when no slice has a single copyable pixel.
    """
    first, last = interval
    b = sample.surfaces.surface_count
    if not 0 <= first <= last < b - 1:
        raise InvalidL(f"layer interval {interval} outside 0..{b - 2}")
    if not (1 <= start_col and start_col + w - 1 <= sample.width):
        raise ValueError(f"window [{start_col}, {start_col + w - 1}] outside [1, {sample.width}]")

    j0 = start_col - 1
    upper = sample.surfaces.positions[:, first, j0:j0 + w]
    lower = sample.surfaces.positions[:, last + 1, j0:j0 + w]
    ok = np.isfinite(upper) & np.isfinite(lower)
    top = np.where(ok, np.ceil(upper), 2.0).astype(np.int64)
    bottom = np.where(ok, np.floor(lower), 1.0).astype(np.int64)
    mask = top <= bottom
    if not mask.any():
        raise EmptyPatch(f"layer block {interval} has no copyable pixels in window at column {start_col}")

    row0 = int(top[mask].min())
    row1 = int(bottom[mask].max())
    pixels = sample.volume.pixels[:, row0 - 1:row1, j0:j0 + w].copy()
    # Normalize masked-out columns to a canonical empty span.
    top = np.where(mask, top, 2).astype(np.int64)
    bottom = np.where(mask, bottom, 1).astype(np.int64)
    return LayerPatch(start_col=start_col, width=w, layer_interval=(first, last),
                      row0=row0, pixels=pixels, top=top, bottom=bottom)


def labeled_bands(surfaces: SurfaceSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column labeled row band, hulled across slices and surfaces.

    Returns (has_band, band_top, band_bottom): integer rows band_top ..
    band_bottom are considered labeled-layer rows at that column. The hull
    over slices is used because paste placement is shared volume-wide.
    """
    pos = surfaces.positions
    flat = pos.reshape(-1, pos.shape[-1])
    has = np.isfinite(flat).any(axis=0)
    top = np.full(pos.shape[-1], 0, dtype=np.int64)
    bottom = np.full(pos.shape[-1], -1, dtype=np.int64)
    if has.any():
        with np.errstate(invalid="ignore"):
            top[has] = np.ceil(np.nanmin(flat[:, has], axis=0)).astype(np.int64)
            bottom[has] = np.floor(np.nanmax(flat[:, has], axis=0)).astype(np.int64)
    return has, top, bottom


def find_paste_anchor(surfaces: SurfaceSet, patch: LayerPatch, height: int, rng: Stream) -> tuple[int, int]:
    """Uniform draw over every offset that pastes the patch into background.

    The anchor (dr, dc) translates a masked source pixel at (row, col) to
    (row + dr, col + dc). Feasible anchors keep the whole window inside
    the image and keep every masked pixel off the labeled band of its
    destination column, in every slice (enforced against the across-slice
    hull of both patch and bands, since the anchor is shared). Raises
    NoSpace when no anchor qualifies.
    """
    has_col, p_top, p_bottom = patch.column_extents()
    if not has_col.any():
        raise EmptyPatch("patch has no masked columns")
    band_has, band_top, band_bottom = labeled_bands(surfaces)
    width = surfaces.width

    dr_lo = 1 - int(p_top[has_col].min())
    dr_hi = height - int(p_bottom[has_col].max())
    dc_lo = 1 - patch.start_col
    dc_hi = width - (patch.start_col + patch.width - 1)
    n_dr = dr_hi - dr_lo + 1
    n_dc = dc_hi - dc_lo + 1
    if n_dr <= 0 or n_dc <= 0:
        raise NoSpace("patch does not fit inside the image at any offset")

    # forbidden[dr, dc] accumulated with a difference array along dr; the
    # pasted span [p_top + dr, p_bottom + dr] hits the band at destination
    # column c + dc exactly when band_top - p_bottom <= dr <= band_bottom - p_top.
    diff = np.zeros((n_dr + 1, n_dc), dtype=np.int32)
    dcs = np.arange(dc_lo, dc_hi + 1, dtype=np.int64)
    for i in np.flatnonzero(has_col):
        dest = (patch.start_col + int(i)) + dcs - 1  # 0-based destination columns
        banded = band_has[dest]
        f_lo = band_top[dest] - int(p_bottom[i])
        f_hi = band_bottom[dest] - int(p_top[i])
        lo_idx = np.clip(f_lo - dr_lo, 0, n_dr)
        hi_idx = np.clip(f_hi - dr_lo + 1, 0, n_dr)
        hit = banded & (hi_idx > lo_idx)
        cols = np.flatnonzero(hit)
        diff[lo_idx[hit], cols] += 1
        diff[hi_idx[hit], cols] -= 1
    forbidden = np.cumsum(diff[:-1], axis=0) > 0

    feasible = np.flatnonzero(~forbidden.ravel())
    if feasible.size == 0:
        raise NoSpace("background has no room for the patch")
    pick = int(feasible[rng.randint(0, int(feasible.size) - 1)])
    dr = dr_lo + pick // n_dc
    dc = dc_lo + pick % n_dc
    return dr, dc


def paste_patch(sample: Sample, patch: LayerPatch, anchor: tuple[int, int]) -> Sample:
    """Overwrite background pixels with the patch at the given offset.

    Hard paste, no blending; each slice pastes its own copied pixels at
    the shared anchor. Labels are reused unchanged (same SurfaceSet
    object), so label immutability holds bitwise.
    """
    dr, dc = anchor
    pixels = sample.volume.pixels.copy()
    mask = patch.mask
    for s in range(sample.slice_count):
        for i in np.flatnonzero(mask[s]):
            t, b = int(patch.top[s, i]), int(patch.bottom[s, i])
            col = patch.start_col - 1 + int(i)
            block = patch.pixels[s, t - patch.row0:b - patch.row0 + 1, i]
            pixels[s, t + dr - 1:b + dr, col + dc] = block
    return sample.with_(volume=sample.volume.with_pixels(pixels))


@dataclass(frozen=True)
class PrlcDraw:
    """Everything drawn for one successful application; enough to replay it."""

    l: int
    w: int
    layer_interval: tuple[int, int]
    start_col: int
    anchor: tuple[int, int]
    restarts: int


def apply_prlc_detailed(sample: Sample, params: PrlcParams, rng: Stream) -> tuple[Sample, PrlcDraw | None]:
    """apply_prlc plus the draw record (None when it degraded to identity)."""
    topology = sample.surfaces.topology
    layer_count = topology.layer_count
    l_lo, l_hi = params.l_range
    if l_hi > layer_count:
        raise InvalidL(f"l range {params.l_range} exceeds {layer_count} layers")
    w_lo, w_hi = params.resolve_w(sample.width)

    l = rng.randint(l_lo, l_hi)
    w = rng.randint(w_lo, w_hi)
    for attempt in range(params.max_restarts + 1):
        interval = choose_layer_block(layer_count, l, rng)
        start_col = rng.randint(1, sample.width - w + 1)
        try:
            patch = extract_patch(sample, interval, start_col, w)
            anchor = find_paste_anchor(sample.surfaces, patch, sample.height, rng)
        except (EmptyPatch, NoSpace):
            continue
        draw = PrlcDraw(l=l, w=w, layer_interval=interval, start_col=start_col,
                        anchor=anchor, restarts=attempt)
        return paste_patch(sample, patch, anchor), draw
    return sample, None


def apply_prlc(sample: Sample, params: PrlcParams, rng: Stream) -> Sample:
    """Paste one layer block into the background, labels untouched.

    Draws are shared across slices. When no placement is found after the
    restart budget the input sample is returned unchanged, keeping
    pipelines total.
    """
    out, _ = apply_prlc_detailed(sample, params, rng)
    return out
