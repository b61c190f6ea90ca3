"""Bit-exact portable dataset files: volumes, surfaces, manifests.

Byte-level layouts live in FORMAT.md. Short version:

* volume (.vol): 64-byte little-endian header (magic "OCTAUGV1", u32
  version, u32 slices, u32 height, u32 width, f64 axial resolution in
  micrometers/pixel, 32-byte NUL-padded UTF-8 subject id) followed by
  slices*height*width float32 values in (slice, row, column) order;
* surfaces (.json): human-readable JSON, positions nested
  [slice][surface][column], null for INVALID;
* manifest.json: dataset geometry plus the subject table (roles, file
  paths, free-form metadata).

Readers return typed errors instead of crashing on malformed input, and
every reader/writer pair round-trips bitwise on valid files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Sample, SurfaceSet, Volume
from .errors import CorruptHeader, DimensionMismatch, TruncatedPayload

__all__ = [
    "Dataset",
    "DatasetWriter",
    "Manifest",
    "SubjectEntry",
    "read_surfaces",
    "read_volume",
    "validate_dataset",
    "write_surfaces",
    "write_volume",
]

VOLUME_MAGIC = b"OCTAUGV1"
VOLUME_VERSION = 1
_HEADER = struct.Struct("<8sIIIId32s")
assert _HEADER.size == 64

SURFACES_FORMAT = "octaug-surfaces"
SURFACES_VERSION = 1
MANIFEST_FORMAT = "octaug-dataset"
MANIFEST_VERSION = 1


def write_volume(volume: Volume, path: str | Path) -> Path:
    """Write one volume; lossless, see header layout in the module docstring."""
    path = Path(path)
    sid = volume.subject_id.encode("utf-8")
    if len(sid) > 32:
        raise ValueError(f"subject id too long for the header (max 32 UTF-8 bytes): {volume.subject_id!r}")
    header = _HEADER.pack(VOLUME_MAGIC, VOLUME_VERSION, volume.slice_count,
                          volume.height, volume.width, volume.axial_resolution_um, sid)
    payload = np.ascontiguousarray(volume.pixels, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return path


def read_volume(path: str | Path, metadata: dict | None = None) -> Volume:
    """Read a volume file back; the free-form metadata map lives in the
    manifest, so pass it in when loading through a dataset."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise CorruptHeader(f"{path}: file shorter than the 64-byte header")
    magic, version, s, n1, n2, resolution, sid = _HEADER.unpack_from(blob)
    if magic != VOLUME_MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != VOLUME_VERSION:
        raise CorruptHeader(f"{path}: unsupported version {version}")
    if min(s, n1, n2) < 1 or not resolution > 0:
        raise CorruptHeader(f"{path}: nonsensical header dims ({s}, {n1}, {n2}) or resolution {resolution}")
    payload = blob[_HEADER.size:]
    if len(payload) % 4 != 0:
        raise TruncatedPayload(f"{path}: payload ends mid-value ({len(payload)} bytes)")
    count = len(payload) // 4
    if count != s * n1 * n2:
        raise DimensionMismatch(f"{path}: header promises {s * n1 * n2} values, payload has {count}")
    pixels = np.frombuffer(payload, dtype="<f4").reshape(s, n1, n2)
    return Volume(pixels=pixels.copy(), axial_resolution_um=resolution,
                  subject_id=sid.rstrip(b"\x00").decode("utf-8"),
                  metadata=metadata or {})


def write_surfaces(surfaces: SurfaceSet, path: str | Path) -> Path:
    path = Path(path)
    pos = surfaces.positions
    nested = [[[None if not np.isfinite(v) else float(v) for v in col]
               for col in sl] for sl in pos]
    doc = {
        "format": SURFACES_FORMAT,
        "version": SURFACES_VERSION,
        "surface_names": list(surfaces.surface_names),
        "positions": nested,
    }
    path.write_text(json.dumps(doc, allow_nan=False, separators=(",", ":")) + "\n",
                    encoding="utf-8")
    return path


def read_surfaces(path: str | Path) -> SurfaceSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptHeader(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != SURFACES_FORMAT:
        raise CorruptHeader(f"{path}: not a surfaces file")
    if doc.get("version") != SURFACES_VERSION:
        raise CorruptHeader(f"{path}: unsupported version {doc.get('version')}")
    raw = doc.get("positions")
    names = doc.get("surface_names", [])
    try:
        arr = np.array([[[np.nan if v is None else float(v) for v in col]
                         for col in sl] for sl in raw], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise CorruptHeader(f"{path}: malformed positions ({exc})") from exc
    if arr.ndim != 3:
        raise CorruptHeader(f"{path}: positions must nest [slice][surface][column]")
    return SurfaceSet(positions=arr, surface_names=tuple(names))


@dataclass
class SubjectEntry:
    id: str
    role: str
    volume: str
    surfaces: str
    mask: str | None = None
    metadata: dict = field(default_factory=dict)


@dataclass
class Manifest:
    """Dataset description; paths are relative to the dataset root."""

    name: str
    axial_resolution_um: float
    slice_count: int
    height: int
    width: int
    surface_count: int
    surface_names: tuple[str, ...]
    subjects: list[SubjectEntry]
    extra: dict = field(default_factory=dict)
    format_version: int = MANIFEST_VERSION

    def to_json_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "version": self.format_version,
            "name": self.name,
            "axial_resolution_um": self.axial_resolution_um,
            "slice_count": self.slice_count,
            "height": self.height,
            "width": self.width,
            "surface_count": self.surface_count,
            "surface_names": list(self.surface_names),
            "subjects": [
                {k: v for k, v in {
                    "id": e.id, "role": e.role, "volume": e.volume,
                    "surfaces": e.surfaces, "mask": e.mask, "metadata": e.metadata,
                }.items() if not (k == "mask" and v is None)}
                for e in self.subjects
            ],
            "extra": self.extra,
        }

    @classmethod
    def from_json_dict(cls, doc: dict, where: str = "manifest") -> "Manifest":
        if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
            raise CorruptHeader(f"{where}: not a dataset manifest")
        if doc.get("version") != MANIFEST_VERSION:
            raise CorruptHeader(f"{where}: unsupported version {doc.get('version')}")
        try:
            subjects = [SubjectEntry(id=e["id"], role=e["role"], volume=e["volume"],
                                     surfaces=e["surfaces"], mask=e.get("mask"),
                                     metadata=e.get("metadata", {}))
                        for e in doc["subjects"]]
            return cls(
                name=doc["name"],
                axial_resolution_um=float(doc["axial_resolution_um"]),
                slice_count=int(doc["slice_count"]),
                height=int(doc["height"]),
                width=int(doc["width"]),
                surface_count=int(doc["surface_count"]),
                surface_names=tuple(doc["surface_names"]),
                subjects=subjects,
                extra=doc.get("extra", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptHeader(f"{where}: malformed manifest ({exc})") from exc


def save_manifest(manifest: Manifest, root: str | Path) -> Path:
    path = Path(root) / "manifest.json"
    path.write_text(json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True,
                               allow_nan=False) + "\n", encoding="utf-8")
    return path


def load_manifest(root: str | Path) -> Manifest:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise CorruptHeader(f"{path}: manifest not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptHeader(f"{path}: not valid JSON ({exc})") from exc
    return Manifest.from_json_dict(doc, where=str(path))


class Dataset:
    """A manifest plus lazy per-subject sample loading."""

    def __init__(self, root: str | Path, manifest: Manifest):
        self.root = Path(root)
        self.manifest = manifest
        self._by_id = {e.id: e for e in manifest.subjects}
        if len(self._by_id) != len(manifest.subjects):
            raise CorruptHeader(f"{self.root}: duplicate subject ids in manifest")

    @classmethod
    def open(cls, root: str | Path) -> "Dataset":
        return cls(root, load_manifest(root))

    @property
    def subject_ids(self) -> list[str]:
        return [e.id for e in self.manifest.subjects]

    def entry(self, subject_id: str) -> SubjectEntry:
        try:
            return self._by_id[subject_id]
        except KeyError:
            raise KeyError(f"unknown subject {subject_id!r} in {self.root}") from None

    def load_volume(self, subject_id: str) -> Volume:
        e = self.entry(subject_id)
        return read_volume(self.root / e.volume, metadata=dict(e.metadata))

    def load_surfaces(self, subject_id: str) -> SurfaceSet:
        e = self.entry(subject_id)
        return read_surfaces(self.root / e.surfaces)

    def load_sample(self, subject_id: str) -> Sample:
        return Sample(self.load_volume(subject_id), self.load_surfaces(subject_id))


class DatasetWriter:
    """Writes samples under root/volumes and root/surfaces, then the manifest."""

    def __init__(self, root: str | Path, name: str, extra: dict | None = None):
        self.root = Path(root)
        self.name = name
        self.extra = extra or {}
        self._entries: list[SubjectEntry] = []
        self._geometry: tuple | None = None
        (self.root / "volumes").mkdir(parents=True, exist_ok=True)
        (self.root / "surfaces").mkdir(parents=True, exist_ok=True)

    def add_sample(self, sample: Sample, role: str = "train",
                   mask: np.ndarray | None = None) -> SubjectEntry:
        sid = sample.volume.subject_id
        if not sid:
            raise ValueError("samples written to a dataset need a subject id")
        geom = (sample.slice_count, sample.height, sample.width,
                sample.surfaces.surface_count, sample.surfaces.surface_names,
                sample.volume.axial_resolution_um)
        if self._geometry is None:
            self._geometry = geom
        elif self._geometry != geom:
            raise DimensionMismatch(f"subject {sid} geometry {geom} differs from dataset {self._geometry}")
        vol_rel = f"volumes/{sid}.vol"
        surf_rel = f"surfaces/{sid}.json"
        write_volume(sample.volume, self.root / vol_rel)
        write_surfaces(sample.surfaces, self.root / surf_rel)
        mask_rel = None
        if mask is not None:
            (self.root / "masks").mkdir(exist_ok=True)
            mask_rel = f"masks/{sid}.npy"
            np.save(self.root / mask_rel, mask)
        entry = SubjectEntry(id=sid, role=role, volume=vol_rel, surfaces=surf_rel,
                             mask=mask_rel, metadata=dict(sample.volume.metadata))
        self._entries.append(entry)
        return entry

    def finalize(self) -> Manifest:
        if self._geometry is None:
            raise ValueError("dataset has no samples")
        s, n1, n2, b, names, res = self._geometry
        manifest = Manifest(name=self.name, axial_resolution_um=res, slice_count=s,
                            height=n1, width=n2, surface_count=b,
                            surface_names=tuple(names), subjects=self._entries,
                            extra=self.extra)
        save_manifest(manifest, self.root)
        return manifest


def validate_dataset(root: str | Path) -> list[str]:
    """Check files against the manifest and every sample against the core
    invariants; returns human-readable problem lines, empty if clean."""
    from .core import validate_sample

    root = Path(root)
    problems: list[str] = []
    try:
        ds = Dataset.open(root)
    except CorruptHeader as exc:
        return [str(exc)]
    m = ds.manifest
    for e in m.subjects:
        try:
            vol = read_volume(root / e.volume)
            surf = read_surfaces(root / e.surfaces)
        except Exception as exc:  # typed reader errors, missing files
            problems.append(f"{e.id}: {type(exc).__name__}: {exc}")
            continue
        dims = (vol.slice_count, vol.height, vol.width)
        declared = (m.slice_count, m.height, m.width)
        if dims != declared:
            problems.append(f"{e.id}: volume dims {dims} != manifest {declared}")
        if vol.axial_resolution_um != m.axial_resolution_um:
            problems.append(f"{e.id}: resolution {vol.axial_resolution_um} != manifest {m.axial_resolution_um}")
        if surf.surface_count != m.surface_count:
            problems.append(f"{e.id}: {surf.surface_count} surfaces != manifest {m.surface_count}")
            continue
        try:
            sample = Sample(vol, surf)
        except DimensionMismatch as exc:
            problems.append(f"{e.id}: {exc}")
            continue
        for v in validate_sample(sample, limit=20):
            problems.append(f"{e.id}: {v}")
        if e.mask is not None and not (root / e.mask).is_file():
            problems.append(f"{e.id}: mask file {e.mask} missing")
    return problems
