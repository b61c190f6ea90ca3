import numpy as np
import pytest

from octaug.core import Sample, SurfaceSet, Volume
from octaug.phantom import PhantomSpec, generate_phantom


def make_sample(positions, height=496, width=None, slices=None, pixels=None,
                resolution=3.9, subject_id="t01"):
    """Sample from a (S, B, N2) position array; pixels default to zeros."""
    positions = np.asarray(positions, dtype=np.float64)
    s, _, n2 = positions.shape
    if width is None:
        width = n2
    if slices is None:
        slices = s
    if pixels is None:
        pixels = np.zeros((slices, height, width), dtype=np.float32)
    volume = Volume(pixels=pixels, axial_resolution_um=resolution, subject_id=subject_id)
    return Sample(volume, SurfaceSet(positions))


def flat_positions(rows, slices=2, width=32):
    """(slices, len(rows), width) positions, each surface flat at its row."""
    rows = np.asarray(rows, dtype=np.float64)
    return np.broadcast_to(rows[None, :, None], (slices, rows.size, width)).copy()


@pytest.fixture
def small_phantom():
    """Layered phantom small enough for brute-force checks."""
    spec = PhantomSpec(slices=2, height=80, width=32, layer_thicknesses=(6.0, 5.0, 7.0),
                       noise=0.0, subject_id="ph01")
    return generate_phantom(spec, seed=7)


@pytest.fixture
def noisy_phantom():
    spec = PhantomSpec(slices=3, height=96, width=40, layer_thicknesses=(8.0, 6.0, 9.0),
                       noise=0.02, subject_id="ph02")
    return generate_phantom(spec, seed=11)
