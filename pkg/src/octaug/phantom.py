"""Synthetic layered samples with analytically known surfaces.

Phantoms are the test oracle substrate: every surface row is known by
construction, so augmentation correctness can be asserted pixel-exactly.
Surface i at column n2 sits at

    top_row + sum(thicknesses[:i]) + curvature * (n2 - c2)**2

identically in every slice; intensities are piecewise constant per layer
with optional per-slice uniform noise drawn from the portable stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox

from .core import Sample, SurfaceSet, Volume, center_index
from .errors import ConfigError, InfeasibleSpec
from .seeding import mix64

__all__ = ["PhantomSpec", "generate_phantom", "spec_from_json_dict"]

_DOUBLE_SCALE = 2.0 ** -53


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and texture of one synthetic subject.

    top_row None centers the layer stack vertically (including the
    curvature bulge). noise is the half-width of additive uniform noise,
    clipped back into [0, 1].
    """

    slices: int = 4
    height: int = 496
    width: int = 1024
    layer_thicknesses: tuple[float, ...] = (20.0,) * 8
    top_row: float | None = None
    curvature: float = 0.0
    noise: float = 0.0
    axial_resolution_um: float = 3.9
    subject_id: str = "phantom"
    surface_names: tuple[str, ...] = ()
    vitreous_intensity: float = 0.02
    below_intensity: float = 0.08
    layer_intensities: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.slices < 1 or self.height < 1 or self.width < 1:
            raise ValueError("dims must be >= 1")
        if len(self.layer_thicknesses) < 1 or any(t <= 0 for t in self.layer_thicknesses):
            raise ValueError("layer thicknesses must be positive")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.layer_intensities is not None and len(self.layer_intensities) != len(self.layer_thicknesses):
            raise ValueError("need one intensity per layer")

    @property
    def surface_count(self) -> int:
        return len(self.layer_thicknesses) + 1


def surface_rows(spec: PhantomSpec) -> np.ndarray:
    """(surface_count, width) float64 analytic rows, 1-based; raises InfeasibleSpec."""
    x = np.arange(1, spec.width + 1, dtype=np.float64) - center_index(spec.width)
    bow = spec.curvature * x**2
    offsets = np.concatenate([[0.0], np.cumsum(spec.layer_thicknesses)])
    total = offsets[-1]
    span = total + abs(spec.curvature) * float(np.max(x**2))
    if spec.top_row is None:
        margin = (spec.height - span) / 2.0 + 1.0
        top = margin - min(0.0, spec.curvature * float(np.max(x**2)))
    else:
        top = float(spec.top_row)
    rows = top + offsets[:, None] + bow[None, :]
    if rows.min() < 1.0 or rows.max() > float(spec.height):
        raise InfeasibleSpec(
            f"layer stack spans rows [{rows.min():.1f}, {rows.max():.1f}], image height {spec.height}"
        )
    return rows


def _uniform_block(seed: int, shape: tuple[int, ...]) -> np.ndarray:
    """[0,1) uniforms from the documented raw-word mapping (portable)."""
    n = int(np.prod(shape))
    raw = Philox(key=np.array([seed, 0], dtype=np.uint64)).random_raw(n)
    return ((raw >> np.uint64(11)) * _DOUBLE_SCALE).reshape(shape)


def generate_phantom(spec: PhantomSpec, seed: int = 0) -> Sample:
    """Deterministic layered sample; same (spec, seed) gives identical bits."""
    rows = surface_rows(spec)
    b = spec.surface_count
    if spec.layer_intensities is not None:
        layer_ints = list(spec.layer_intensities)
    elif b == 2:
        layer_ints = [0.6]
    else:
        layer_ints = [0.3 + 0.6 * i / (b - 2) for i in range(b - 1)]
    lut = np.array([spec.vitreous_intensity] + layer_ints + [spec.below_intensity],
                   dtype=np.float64)

    r = np.arange(1, spec.height + 1, dtype=np.float64)
    region = (rows[None, :, :] <= r[:, None, None]).sum(axis=1)  # (height, width)
    base = lut[region].astype(np.float32)

    pixels = np.repeat(base[None, :, :], spec.slices, axis=0)
    if spec.noise > 0:
        u = _uniform_block(mix64(seed, 0xA0D5E), pixels.shape)
        pixels = np.clip(pixels + spec.noise * (2.0 * u - 1.0), 0.0, 1.0).astype(np.float32)

    positions = np.repeat(rows[None, :, :], spec.slices, axis=0)
    volume = Volume(pixels=pixels, axial_resolution_um=spec.axial_resolution_um,
                    subject_id=spec.subject_id)
    surfaces = SurfaceSet(positions=positions, surface_names=spec.surface_names)
    return Sample(volume, surfaces)


_SPEC_KEYS = {
    "name": str, "subjects": int, "slices": int, "height": int, "width": int,
    "layers": list, "top_row": (int, float, type(None)), "curvature": (int, float),
    "noise": (int, float), "resolution_um": (int, float), "seed": int,
    "surface_names": list,
}
_SPEC_REQUIRED = ("name", "subjects", "slices", "height", "width", "layers")


def spec_from_json_dict(doc: dict) -> tuple[str, int, int, PhantomSpec]:
    """Parse a phantom dataset spec file: returns (name, subjects, seed, per-subject spec).

    Strict: unknown keys are errors, as are missing required ones.
    """
    if not isinstance(doc, dict):
        raise ConfigError("phantom spec must be a JSON object")
    for key in doc:
        if key not in _SPEC_KEYS:
            raise ConfigError(f"phantom spec: unknown key {key!r}")
    for key in _SPEC_REQUIRED:
        if key not in doc:
            raise ConfigError(f"phantom spec: missing required key {key!r}")
    for key, types in _SPEC_KEYS.items():
        if key in doc and not isinstance(doc[key], types):
            raise ConfigError(f"phantom spec: key {key!r} has wrong type")
    try:
        spec = PhantomSpec(
            slices=doc["slices"], height=doc["height"], width=doc["width"],
            layer_thicknesses=tuple(float(t) for t in doc["layers"]),
            top_row=doc.get("top_row"),
            curvature=float(doc.get("curvature", 0.0)),
            noise=float(doc.get("noise", 0.0)),
            axial_resolution_um=float(doc.get("resolution_um", 3.9)),
            surface_names=tuple(doc.get("surface_names", ())),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"phantom spec: {exc}") from exc
    return doc["name"], int(doc["subjects"]), int(doc.get("seed", 0)), spec
