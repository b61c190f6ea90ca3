"""Baseline and comparison augmentations: flip, vertical scale, affine, cutmix.

All of them keep labels consistent with pixels. Flip and the shift-style
ops are exact; vertical scaling and affine warps interpolate linearly and
zero-fill, which is why the shift augmentation in fdda.py exists as a
separate exact path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Center, Sample
from .errors import DimensionMismatch, NonPositiveFactor, SingularTransform
from .seeding import Stream

__all__ = [
    "AffineParams",
    "AffineRanges",
    "CutRect",
    "cutmix",
    "cutmix_at",
    "draw_cut_rect",
    "horizontal_flip",
    "random_affine",
    "sample_affine_params",
    "vertical_scale",
]


def horizontal_flip(sample: Sample) -> Sample:
    """Mirror columns (n2 -> N2 + 1 - n2) in pixels and labels. Involution."""
    pixels = sample.volume.pixels[:, :, ::-1].copy()
    positions = sample.surfaces.positions[:, :, ::-1].copy()
    return sample.with_(volume=sample.volume.with_pixels(pixels),
                        surfaces=sample.surfaces.with_positions(positions))


def vertical_scale(sample: Sample, factor: float) -> Sample:
    """Resample each column vertically about the top row by `factor`.

    Row 1 is the fixed point: output row n1 reads source row
    1 + (n1 - 1) / factor with linear interpolation, zero beyond the
    source extent, and labels map as b' = 1 + factor * (b - 1), turning
    INVALID outside [1, N1]. factor = 1 is the bit-exact identity. Note
    that a factor > 1 pushes bottom content (and labels) out of frame,
    so shrink-then-restore round trips are the lossless direction.
    """
    if not factor > 0:
        raise NonPositiveFactor(f"scale factor must be > 0, got {factor}")
    n1 = sample.height
    src = np.arange(n1, dtype=np.float64) / factor  # 0-based source rows
    lo = np.floor(src).astype(np.int64)
    w = src - lo
    beyond = src > n1 - 1
    lo = np.clip(lo, 0, n1 - 1)
    hi = np.minimum(lo + 1, n1 - 1)
    px = sample.volume.pixels
    out = (1.0 - w)[None, :, None] * px[:, lo, :] + w[None, :, None] * px[:, hi, :]
    out[:, beyond, :] = 0.0
    pixels = out.astype(np.float32)

    pos = sample.surfaces.positions
    mapped = 1.0 + factor * (pos - 1.0)
    keep = (mapped >= 1.0) & (mapped <= float(n1))
    positions = np.where(keep, mapped, np.nan)
    return sample.with_(volume=sample.volume.with_pixels(pixels),
                        surfaces=sample.surfaces.with_positions(positions))


@dataclass(frozen=True)
class AffineParams:
    """One drawn affine transform: rotate and scale about the image center, then translate."""

    rotation_deg: float = 0.0
    translate: tuple[float, float] = (0.0, 0.0)  # (rows, cols)
    scale: float = 1.0


@dataclass(frozen=True)
class AffineRanges:
    """Draw intervals; translation is a fraction of (height, width)."""

    rotation: tuple[float, float] = (-10.0, 10.0)
    translate_frac: tuple[float, float] = (-0.1, 0.1)
    scale: tuple[float, float] = (0.9, 1.1)


def sample_affine_params(ranges: AffineRanges, height: int, width: int, rng: Stream) -> AffineParams:
    """Four draws, fixed order: rotation, row fraction, col fraction, scale."""
    rot = rng.uniform(*ranges.rotation)
    t_row = rng.uniform(*ranges.translate_frac) * height
    t_col = rng.uniform(*ranges.translate_frac) * width
    scale = rng.uniform(*ranges.scale)
    return AffineParams(rotation_deg=rot, translate=(t_row, t_col), scale=scale)


def _is_pure_translation(params: AffineParams) -> bool:
    return params.rotation_deg == 0.0 and params.scale == 1.0


def _forward_points(rows: np.ndarray, cols: np.ndarray, params: AffineParams,
                    center: Center) -> tuple[np.ndarray, np.ndarray]:
    if _is_pure_translation(params):
        # Single-op path keeps integer translations exact on fractional labels.
        return rows + params.translate[0], cols + params.translate[1]
    th = math.radians(params.rotation_deg)
    cs, sn = math.cos(th), math.sin(th)
    u, v = rows - center.c1, cols - center.c2
    r = params.scale * (cs * u - sn * v) + center.c1 + params.translate[0]
    c = params.scale * (sn * u + cs * v) + center.c2 + params.translate[1]
    return r, c


def _inverse_coords(rows: np.ndarray, cols: np.ndarray, params: AffineParams,
                    center: Center) -> tuple[np.ndarray, np.ndarray]:
    if _is_pure_translation(params):
        return rows - params.translate[0], cols - params.translate[1]
    th = math.radians(params.rotation_deg)
    cs, sn = math.cos(th), math.sin(th)
    u = (rows - params.translate[0]) - center.c1
    v = (cols - params.translate[1]) - center.c2
    r = (cs * u + sn * v) / params.scale + center.c1
    c = (-sn * u + cs * v) / params.scale + center.c2
    return r, c


def _warp_image(img: np.ndarray, params: AffineParams, center: Center) -> np.ndarray:
    n1, n2 = img.shape
    rr, cc = np.meshgrid(np.arange(1, n1 + 1, dtype=np.float64),
                         np.arange(1, n2 + 1, dtype=np.float64), indexing="ij")
    r_src, c_src = _inverse_coords(rr, cc, params, center)
    r0 = np.floor(r_src).astype(np.int64)
    c0 = np.floor(c_src).astype(np.int64)
    wr = r_src - r0
    wc = c_src - c0
    acc = np.zeros(img.shape, dtype=np.float64)
    for dr, dc, wgt in ((0, 0, (1 - wr) * (1 - wc)), (0, 1, (1 - wr) * wc),
                        (1, 0, wr * (1 - wc)), (1, 1, wr * wc)):
        ri, ci = r0 + dr, c0 + dc
        ok = (ri >= 1) & (ri <= n1) & (ci >= 1) & (ci <= n2)
        vals = np.zeros(img.shape, dtype=np.float64)
        vals[ok] = img[ri[ok] - 1, ci[ok] - 1]
        acc += wgt * vals
    return acc.astype(img.dtype)


def _warp_surface(rows: np.ndarray, params: AffineParams, center: Center,
                  height: int, width: int) -> np.ndarray:
    """Map one surface polyline and resample it on the output column grid."""
    cols = np.arange(1, width + 1, dtype=np.float64)
    ok = np.isfinite(rows)
    out = np.full(width, np.nan)
    if not ok.any():
        return out
    r_t, c_t = _forward_points(rows[ok], cols[ok], params, center)
    if r_t.size == 1:
        nearest = int(math.floor(c_t[0] + 0.5))
        if 1 <= nearest <= width:
            out[nearest - 1] = r_t[0]
    else:
        order = np.argsort(c_t, kind="stable")
        c_s, r_s = c_t[order], r_t[order]
        vals = np.interp(cols, c_s, r_s)
        covered = (cols >= c_s[0]) & (cols <= c_s[-1])
        out[covered] = vals[covered]
    out[~((out >= 1.0) & (out <= float(height)))] = np.nan
    return out


def random_affine(sample: Sample, params: AffineParams) -> Sample:
    """Affine warp about the image center, labels transformed to match.

    Pixels use bilinear interpolation with zero fill. Surfaces are mapped
    point-wise through the forward transform and re-read per output column
    by linear interpolation along the transformed polyline; columns the
    polyline does not reach, or rows leaving [1, N1], become INVALID.
    A pure integer row translation reproduces the zero-order shift
    augmentation bit for bit.
    """
    if abs(params.scale) < 1e-6:
        raise SingularTransform(f"scale {params.scale} is not invertible")
    center = Center.of(sample.height, sample.width)
    pixels = np.stack([_warp_image(sl, params, center) for sl in sample.volume.slices()])
    pos = sample.surfaces.positions
    positions = np.stack([
        np.stack([_warp_surface(pos[s, b], params, center, sample.height, sample.width)
                  for b in range(pos.shape[1])])
        for s in range(pos.shape[0])
    ])
    return sample.with_(volume=sample.volume.with_pixels(pixels),
                        surfaces=sample.surfaces.with_positions(positions))


@dataclass(frozen=True)
class CutRect:
    """Half-open pixel rectangle, 1-based: rows [row_lo, row_hi), cols [col_lo, col_hi)."""

    row_lo: int
    row_hi: int
    col_lo: int
    col_hi: int

    @property
    def empty(self) -> bool:
        return self.row_hi <= self.row_lo or self.col_hi <= self.col_lo

    def contains_rows(self, rows: np.ndarray) -> np.ndarray:
        return (rows >= self.row_lo) & (rows < self.row_hi)


def draw_cut_rect(height: int, width: int, rng: Stream) -> CutRect:
    """Uniform rectangle from two sorted row bounds and two sorted col bounds."""
    r_a, r_b = rng.randint(1, height + 1), rng.randint(1, height + 1)
    c_a, c_b = rng.randint(1, width + 1), rng.randint(1, width + 1)
    return CutRect(min(r_a, r_b), max(r_a, r_b), min(c_a, c_b), max(c_a, c_b))


def cutmix_at(sample_a: Sample, sample_b: Sample, rect: CutRect) -> Sample:
    """Paste sample_b's rectangle into sample_a, all slices sharing it.

    Boundary-label adaptation (this augmentation was designed for
    classification, so this rule is a documented comparison-only choice):
    within the rectangle's columns, an entry of sample_a whose row falls
    inside the rectangle is replaced by sample_b's entry when that also
    falls inside, and becomes INVALID otherwise; everything else is kept.
    """
    if sample_a.volume.pixels.shape != sample_b.volume.pixels.shape or \
            sample_a.surfaces.positions.shape != sample_b.surfaces.positions.shape:
        raise DimensionMismatch("cutmix inputs must be dimensionally identical")
    if rect.empty:
        return sample_a
    pixels = sample_a.volume.pixels.copy()
    pixels[:, rect.row_lo - 1:rect.row_hi - 1, rect.col_lo - 1:rect.col_hi - 1] = \
        sample_b.volume.pixels[:, rect.row_lo - 1:rect.row_hi - 1, rect.col_lo - 1:rect.col_hi - 1]

    pa = sample_a.surfaces.positions.copy()
    pb = sample_b.surfaces.positions
    cols = slice(rect.col_lo - 1, rect.col_hi - 1)
    a_in = np.isfinite(pa[:, :, cols]) & rect.contains_rows(pa[:, :, cols])
    b_in = np.isfinite(pb[:, :, cols]) & rect.contains_rows(pb[:, :, cols])
    region = pa[:, :, cols]
    region[a_in] = np.where(b_in[a_in], pb[:, :, cols][a_in], np.nan)
    pa[:, :, cols] = region
    return sample_a.with_(volume=sample_a.volume.with_pixels(pixels),
                          surfaces=sample_a.surfaces.with_positions(pa))


def cutmix(sample_a: Sample, sample_b: Sample, rng: Stream) -> Sample:
    """Draw a shared rectangle and mix sample_b into sample_a."""
    rect = draw_cut_rect(sample_a.height, sample_a.width, rng)
    return cutmix_at(sample_a, sample_b, rect)
