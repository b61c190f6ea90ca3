"""Column-wise polynomial shift augmentation.

Each column n2 of an image is shifted vertically by a polynomial in the
column's distance from the image center column:

    delta(n2) = sum_k a(k) * (n2 - c2)**k,   c2 = floor(N2/2) + 1, n2 = 1..N2

The image is moved by the rounded field s(n2) = floor(delta(n2) + 0.5)
as a pure integer gather with zero padding:

    out(n1, n2) = img(n1 + s(n2), n2)  if 1 <= n1 + s(n2) <= N1, else 0

so a feature at source row r appears at output row r - s(n2), and surface
labels move by the same rule: b'(n2) = b(n2) - s(n2). No interpolation
anywhere; the identity field reproduces the input bit for bit.

Rounding is a true floor of delta + 0.5 (so -0.5 rounds to 0 and -0.6 to
-1), and delta is evaluated term by term, not by Horner's rule, so each
order contributes exactly one rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Sample, SurfaceSet, center_index
from .errors import DegenerateSample, DimensionMismatch
from .seeding import Stream

__all__ = [
    "A0_POLICIES",
    "CoeffVector",
    "FddaRanges",
    "ShiftField",
    "apply_to_image",
    "apply_to_surfaces",
    "apply_to_volume",
    "compute_shift_field",
    "feasible_a0_interval",
    "sample_coeffs",
]

A0_POLICIES = ("keep_in_frame", "zero")


@dataclass(frozen=True)
class CoeffVector:
    """Polynomial coefficients a(0)..a(N) of the shift field."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1:
            raise ValueError("need at least the constant coefficient a(0)")
        if not all(np.isfinite(vals)):
            raise ValueError(f"coefficients must be finite, got {vals}")
        object.__setattr__(self, "values", vals)

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class FddaRanges:
    """Sampling intervals for the shift coefficients.

    a1/a2 are closed intervals for the linear and quadratic coefficients;
    `higher` holds intervals for orders 3..N when order > 2. a0 is not an
    interval: it is resolved by `a0_policy`, either "zero" (constant 0) or
    "keep_in_frame" (uniform over the largest interval that keeps every
    valid surface inside [1, N1] after the full rounded shift, falling
    back to 0 when no such interval exists).
    """

    a1: tuple[float, float] = (-0.5, 0.5)
    a2: tuple[float, float] = (-0.0002, 0.0002)
    a0_policy: str = "keep_in_frame"
    order: int = 2
    higher: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.a0_policy not in A0_POLICIES:
            raise ValueError(f"unknown a0 policy {self.a0_policy!r}, expected one of {A0_POLICIES}")
        if self.order < 0:
            raise ValueError("order must be >= 0")
        expected_higher = max(0, self.order - 2)
        if len(self.higher) != expected_higher:
            raise ValueError(f"order {self.order} needs {expected_higher} ranges beyond a2, got {len(self.higher)}")
        for name, (lo, hi) in self._interval_items():
            if not lo <= hi:
                raise ValueError(f"{name} interval bounds out of order: [{lo}, {hi}]")

    def _interval_items(self):
        items = []
        if self.order >= 1:
            items.append(("a1", self.a1))
        if self.order >= 2:
            items.append(("a2", self.a2))
        for k, rng in enumerate(self.higher, start=3):
            items.append((f"a{k}", rng))
        return items


@dataclass(frozen=True, eq=False)
class ShiftField:
    """Per-column real shift and its rounded integer form.

    rounded[j] == floor(delta[j] + 0.5) for every column, by construction.
    """

    delta: np.ndarray
    rounded: np.ndarray

    @property
    def width(self) -> int:
        return self.delta.shape[0]


def compute_shift_field(a: CoeffVector, width: int) -> ShiftField:
    """Evaluate the shift polynomial over columns 1..width.

    The basis is (n2 - c2)**k with 1-based n2 and c2 = floor(width/2) + 1;
    terms are summed order by order so each coefficient incurs a single
    floating-point rounding against its exact integer basis value.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    x = np.arange(1, width + 1, dtype=np.float64) - center_index(width)
    delta = np.zeros(width, dtype=np.float64)
    for k, coeff in enumerate(a):
        delta += coeff * x**k
    rounded = np.floor(delta + 0.5).astype(np.int64)
    return ShiftField(delta=delta, rounded=rounded)


def apply_to_image(img: np.ndarray, field: ShiftField) -> np.ndarray:
    """Shift one B-scan by the rounded field; pure gather, zero padding.

    img is a (height, width) array; dtype is preserved.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D image, got shape {img.shape}")
    n1, n2 = img.shape
    if n2 != field.width:
        raise DimensionMismatch(f"image width {n2} != field width {field.width}")
    # 0-based source rows; 1 <= n1 + s <= N1 becomes 0 <= i + s <= N1 - 1.
    src = np.arange(n1, dtype=np.int64)[:, None] + field.rounded[None, :]
    inside = (src >= 0) & (src < n1)
    out = img[np.clip(src, 0, n1 - 1), np.arange(n2)[None, :]]
    out[~inside] = 0
    return out


def apply_to_surfaces(positions: np.ndarray, field: ShiftField, height: int) -> np.ndarray:
    """Shift surface labels consistently with the image gather.

    positions is any float array whose last axis is the column axis
    (1-based rows, NaN invalid). Each valid entry moves to b - s(n2);
    results outside [1, height] become invalid rather than clamped,
    because clamping would fabricate a boundary at the image edge.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[-1] != field.width:
        raise DimensionMismatch(
            f"label width {positions.shape[-1]} != field width {field.width}"
        )
    shifted = positions - field.rounded.astype(np.float64)
    keep = (shifted >= 1.0) & (shifted <= float(height))
    return np.where(keep, shifted, np.nan)


def apply_to_volume(sample: Sample, a: CoeffVector) -> Sample:
    """Apply one shared shift field to every slice's image and labels."""
    field = compute_shift_field(a, sample.width)
    pixels = np.stack([apply_to_image(sl, field) for sl in sample.volume.slices()])
    positions = apply_to_surfaces(sample.surfaces.positions, field, sample.height)
    return sample.with_(
        volume=sample.volume.with_pixels(pixels),
        surfaces=sample.surfaces.with_positions(positions),
    )


def feasible_a0_interval(positions: np.ndarray, height: int,
                         partial_delta: np.ndarray) -> tuple[float, float] | None:
    """Largest a0 interval keeping every valid label inside [1, height].

    partial_delta is the real shift contribution of all orders >= 1 at
    each column. With t(c)/m(c) the topmost/bottommost valid positions in
    a column, the rounded shift s(c) = floor(a0 + partial_delta(c) + 0.5)
    must satisfy ceil(m - height) <= s <= floor(t - 1), which translates
    to a half-open a0 interval per column; the intersection over columns
    is returned as (lo, hi) with feasibility on [lo, hi), or None when
    empty. Raises DegenerateSample when no valid position exists at all.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[-1] != partial_delta.shape[0]:
        raise DimensionMismatch("label width != shift field width")
    flat = positions.reshape(-1, positions.shape[-1])
    any_valid = np.isfinite(flat).any(axis=0)
    if not any_valid.any():
        raise DegenerateSample("no valid surface positions; a(0) bound undefined")

    with np.errstate(invalid="ignore"):
        top = np.nanmin(flat[:, any_valid], axis=0)
        bottom = np.nanmax(flat[:, any_valid], axis=0)
    d = partial_delta[any_valid]
    s_hi = np.floor(top - 1.0)            # keep topmost label >= 1
    s_lo = np.ceil(bottom - float(height))  # keep bottommost label <= height
    # floor(a0 + d + 0.5) in [s_lo, s_hi]  <=>  a0 in [s_lo - d - 0.5, s_hi - d + 0.5)
    lo = float(np.max(s_lo - d) - 0.5)
    hi = float(np.min(s_hi - d) + 0.5)
    if not lo < hi:
        return None
    return lo, hi


def sample_coeffs(ranges: FddaRanges, sample: Sample, rng: Stream) -> CoeffVector:
    """Draw one coefficient vector for a sample.

    Orders >= 1 are uniform over their configured intervals. a(0) follows
    the policy: "zero" pins it at 0; "keep_in_frame" draws it uniformly
    from the feasible interval computed against the drawn higher orders
    (falling back to 0 when that interval is empty), which emulates moving
    the whole structure up or down while keeping it entirely in frame.
    """
    if not np.isfinite(sample.surfaces.positions).any():
        raise DegenerateSample("no valid surface positions; a(0) bound undefined")

    upper = [rng.uniform(lo, hi) for _, (lo, hi) in ranges._interval_items()]
    if ranges.a0_policy == "zero":
        a0 = 0.0
    else:
        partial = compute_shift_field(CoeffVector((0.0, *upper)), sample.width).delta
        interval = feasible_a0_interval(sample.surfaces.positions, sample.height, partial)
        a0 = rng.uniform(*interval) if interval is not None else 0.0
    return CoeffVector((a0, *upper))
