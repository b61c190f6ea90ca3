"""Domain types and indexing conventions shared by every augmentation.

Index convention: all published formulas for this kind of data use 1-based
(row, column) coordinates with the origin at the upper-left pixel, rows
increasing downward. Arrays are stored 0-based internally; the conversion
happens exactly once, at the formula boundary inside each operation, and
every public value that represents a row position (surface labels, shift
bounds) is 1-based.

INVALID surface entries are NaN in memory and `null` on disk (see
storage.py). Use `valid_mask` rather than comparing against NaN directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

import numpy as np

from .errors import DimensionMismatch

__all__ = [
    "INVALID",
    "Center",
    "LayerTopology",
    "Sample",
    "SurfaceSet",
    "Violation",
    "Volume",
    "center_index",
    "valid_mask",
    "validate_sample",
]

# In-memory sentinel for "no label at this column". Serialized as null.
INVALID = float("nan")


def valid_mask(positions: np.ndarray) -> np.ndarray:
    """Boolean mask of entries that carry a real surface position."""
    return np.isfinite(positions)


def center_index(n: int) -> int:
    """1-based center index of an axis of length n: floor(n/2) + 1."""
    if n < 1:
        raise ValueError(f"axis length must be >= 1, got {n}")
    return n // 2 + 1


@dataclass(frozen=True)
class Center:
    """1-based center pixel (c1, c2) of an image.

    c1 (the row center) is carried for completeness; the shift formulas
    only consume c2.
    """

    c1: int
    c2: int

    @classmethod
    def of(cls, height: int, width: int) -> "Center":
        return cls(center_index(height), center_index(width))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Volume:
    """Ordered stack of same-sized B-scan intensity images.

    pixels: float32 array of shape (slices, height, width), i.e. index
    order (slice, row, column). Normalized data lives in [0, 1]; raw
    imports may exceed that until normalized. The constructor takes
    ownership of the array and marks it read-only.
    """

    pixels: np.ndarray
    axial_resolution_um: float
    subject_id: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3:
            raise DimensionMismatch(f"volume pixels must be 3-D (slice, row, col), got shape {px.shape}")
        if min(px.shape) < 1:
            raise DimensionMismatch(f"volume dimensions must all be >= 1, got {px.shape}")
        if not self.axial_resolution_um > 0:
            raise ValueError(f"axial resolution must be > 0, got {self.axial_resolution_um}")
        object.__setattr__(self, "pixels", _freeze(px))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def slice_count(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def slices(self) -> Iterator[np.ndarray]:
        """Iterate the 2-D (height, width) B-scan views in order."""
        for s in range(self.slice_count):
            yield self.pixels[s]

    def with_pixels(self, pixels: np.ndarray) -> "Volume":
        return replace(self, pixels=pixels)


@dataclass(frozen=True, eq=False)
class SurfaceSet:
    """Per-slice, per-surface, per-column subpixel row positions.

    positions: float64 array of shape (slices, surfaces, width) holding
    1-based row positions, NaN where a column carries no label. Surfaces
    are ordered top to bottom. Positions are stored as reals because the
    source labels are subpixel and the distance metric is defined on real
    distances, even though the shift augmentation moves them by integers.
    """

    positions: np.ndarray
    surface_names: tuple[str, ...] = ()

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3:
            raise DimensionMismatch(f"surface positions must be 3-D (slice, surface, col), got shape {pos.shape}")
        names = tuple(self.surface_names)
        if not names:
            names = tuple(f"surface{i + 1}" for i in range(pos.shape[1]))
        if len(names) != pos.shape[1]:
            raise DimensionMismatch(
                f"{len(names)} surface names for {pos.shape[1]} surfaces"
            )
        object.__setattr__(self, "positions", _freeze(pos))
        object.__setattr__(self, "surface_names", names)

    @property
    def slice_count(self) -> int:
        return self.positions.shape[0]

    @property
    def surface_count(self) -> int:
        return self.positions.shape[1]

    @property
    def width(self) -> int:
        return self.positions.shape[2]

    @property
    def topology(self) -> "LayerTopology":
        return LayerTopology(self.surface_count)

    def with_positions(self, positions: np.ndarray) -> "SurfaceSet":
        return SurfaceSet(positions, self.surface_names)


@dataclass(frozen=True)
class LayerTopology:
    """Layer-between-surfaces convention: B surfaces bound B - 1 layers.

    Layer i is the region between surface i and surface i + 1 (0-based);
    it is nonempty at a column only where both bounding surfaces are valid.
    """

    surface_count: int

    def __post_init__(self):
        if self.surface_count < 1:
            raise ValueError("need at least one surface")

    @property
    def layer_count(self) -> int:
        return self.surface_count - 1

    def bounding_surfaces(self, layer: int) -> tuple[int, int]:
        """(upper, lower) surface indices bounding a 0-based layer index."""
        if not 0 <= layer < self.layer_count:
            raise ValueError(f"layer {layer} outside 0..{self.layer_count - 1}")
        return layer, layer + 1


@dataclass(frozen=True, eq=False)
class Sample:
    """A volume paired with its surface labels; the unit every augmentation transforms."""

    volume: Volume
    surfaces: SurfaceSet

    def __post_init__(self):
        v, s = self.volume, self.surfaces
        if v.slice_count != s.slice_count or v.width != s.width:
            raise DimensionMismatch(
                f"volume ({v.slice_count}, {v.height}, {v.width}) inconsistent with "
                f"surfaces ({s.slice_count}, {s.surface_count}, {s.width})"
            )

    @property
    def slice_count(self) -> int:
        return self.volume.slice_count

    @property
    def height(self) -> int:
        return self.volume.height

    @property
    def width(self) -> int:
        return self.volume.width

    def with_(self, volume: Volume | None = None, surfaces: SurfaceSet | None = None) -> "Sample":
        return Sample(volume if volume is not None else self.volume,
                      surfaces if surfaces is not None else self.surfaces)


@dataclass(frozen=True)
class Violation:
    """One invariant violation, locating the offending slice/surface/column.

    Indices are 0-based array indices into pixels / positions, so a report
    can be checked directly against the offending entry.
    """

    kind: str
    message: str
    slice_index: int | None = None
    surface: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = []
        if self.slice_index is not None:
            where.append(f"slice {self.slice_index}")
        if self.surface is not None:
            where.append(f"surface {self.surface}")
        if self.column is not None:
            where.append(f"column {self.column}")
        loc = f" [{', '.join(where)}]" if where else ""
        return f"{self.kind}{loc}: {self.message}"


def validate_sample(sample: Sample, limit: int | None = None) -> list[Violation]:
    """Report every core-invariant violation in a sample; empty iff consistent.

    Never raises: validation is a total function over constructible
    samples. `limit` caps the returned list for huge inputs.
    """
    out: list[Violation] = []
    vol, surf = sample.volume, sample.surfaces
    n1 = vol.height

    def room() -> int | None:
        return None if limit is None else max(0, limit - len(out))

    bad_px = ~np.isfinite(vol.pixels)
    if bad_px.any():
        for s, r, c in np.argwhere(bad_px)[: room()]:
            out.append(Violation("nonfinite_pixel", f"pixel value at row index {r} is not finite",
                                 slice_index=int(s), column=int(c)))

    pos = surf.positions
    finite = np.isfinite(pos)
    out_of_range = finite & ((pos < 1.0) | (pos > float(n1)))
    if out_of_range.any():
        for s, b, c in np.argwhere(out_of_range)[: room()]:
            out.append(Violation("position_range",
                                 f"position {pos[s, b, c]:g} outside [1, {n1}]",
                                 slice_index=int(s), surface=int(b), column=int(c)))

    if surf.surface_count >= 2:
        upper, lower = pos[:, :-1, :], pos[:, 1:, :]
        disorder = np.isfinite(upper) & np.isfinite(lower) & (upper > lower)
        if disorder.any():
            for s, b, c in np.argwhere(disorder)[: room()]:
                out.append(Violation("surface_ordering",
                                     f"surface {b} at {upper[s, b, c]:g} below surface {b + 1} "
                                     f"at {lower[s, b, c]:g}",
                                     slice_index=int(s), surface=int(b), column=int(c)))

    return out[:limit] if limit is not None else out
