"""Config-driven augmentation runs and the operations behind the CLI.

Determinism contract: every augmentation decision for (sample, epoch)
comes from its own substream seeded by mix64(sample_seed, augmentation
id), where sample_seed = mix64(master_seed, sample_index, epoch). Coin
flips and parameter draws therefore never interact across augmentations:
disabling one augmentation cannot perturb another's draws, and worker
count or execution order cannot change any output byte.

Each run writes, under the output directory:
  config.json        resolved config actually used
  provenance.jsonl   one line per (epoch, sample) with every drawn value
  epoch_NNN/         a complete dataset (manifest + files) per epoch
Replaying a provenance line through replay_records reproduces the sample.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import baseline, fdda, prlc
from .core import Sample
from .errors import ConfigError, DegenerateSample, OctaugError
from .metrics import EvalReport, evaluate_run
from .overlay import render_overlay
from .phantom import generate_phantom, spec_from_json_dict
from .seeding import SeedScheme, Stream, mix64
from .storage import Dataset, DatasetWriter
from dataclasses import replace

__all__ = [
    "AUG_IDS",
    "AugRecord",
    "DEFAULT_ORDER",
    "PipelineConfig",
    "augment_sample",
    "list_presets",
    "load_preset",
    "render_eval_text",
    "replay_records",
    "run_augment",
    "run_eval",
    "run_gen_phantom",
    "run_preview",
]

AUG_IDS = {"flip": 1, "vscale": 2, "fdda": 3, "prlc": 4, "affine": 5, "cutmix": 6}
DEFAULT_ORDER = ("flip", "vscale", "fdda", "prlc", "affine", "cutmix")


# ---------------------------------------------------------------------------
# Config

@dataclass(frozen=True)
class AugSettings:
    """Per-augmentation switch, firing probability, and parameter object."""

    enabled: bool = False
    probability: float = 0.5
    params: object = None

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"probability must be in [0, 1], got {self.probability}")


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str
    output: str
    master_seed: int
    epochs: int = 1
    workers: int = 1
    order: tuple[str, ...] = DEFAULT_ORDER
    augmentations: Mapping[str, AugSettings] = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1 or self.workers < 1:
            raise ConfigError("epochs and workers must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must fit in 64 bits")
        seen = set()
        for name in self.order:
            if name not in AUG_IDS:
                raise ConfigError(f"order: unknown augmentation {name!r}")
            if name in seen:
                raise ConfigError(f"order: duplicate augmentation {name!r}")
            seen.add(name)
        augs = dict(self.augmentations)
        for name in AUG_IDS:
            augs.setdefault(name, _default_settings(name))
        object.__setattr__(self, "augmentations", augs)

    def enabled_order(self) -> tuple[str, ...]:
        return tuple(n for n in self.order if self.augmentations[n].enabled)

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "output": self.output,
            "master_seed": self.master_seed,
            "epochs": self.epochs,
            "workers": self.workers,
            "order": list(self.order),
            "augmentations": {name: _settings_to_dict(name, s)
                              for name, s in sorted(self.augmentations.items())},
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json_dict(doc, base_dir=path.parent)

    @classmethod
    def from_json_dict(cls, doc: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        base = Path(base_dir)
        top = {"dataset": str, "output": str, "master_seed": int, "epochs": int,
               "workers": int, "order": list, "augmentations": dict}
        _check_keys(doc, "config", allowed=top, required=("dataset", "output", "master_seed"))
        augs = {}
        for name, sub in doc.get("augmentations", {}).items():
            if name not in AUG_IDS:
                raise ConfigError(f"config.augmentations: unknown augmentation {name!r}")
            augs[name] = _parse_settings(name, sub)
        return cls(
            dataset=str(base / doc["dataset"]),
            output=str(base / doc["output"]),
            master_seed=doc["master_seed"],
            epochs=doc.get("epochs", 1),
            workers=doc.get("workers", 1),
            order=tuple(doc.get("order", DEFAULT_ORDER)),
            augmentations=augs,
        )


def _check_keys(doc, where: str, allowed: dict, required: tuple[str, ...] = ()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")
    for key in required:
        if key not in doc:
            raise ConfigError(f"{where}: missing required key {key!r}")
    for key, types in allowed.items():
        if key in doc and not isinstance(doc[key], types):
            raise ConfigError(f"{where}.{key}: wrong type, expected {types}")


def _interval(doc, where: str, length: int = 2) -> tuple:
    if not isinstance(doc, (list, tuple)) or len(doc) != length:
        raise ConfigError(f"{where}: expected a {length}-element interval")
    return tuple(doc)


def _default_settings(name: str) -> AugSettings:
    return AugSettings(enabled=False, probability=0.5, params=_default_params(name))


def _default_params(name: str):
    return {
        "flip": None,
        "vscale": (0.9, 1.1),
        "fdda": fdda.FddaRanges(),
        "prlc": prlc.PrlcParams(),
        "affine": baseline.AffineRanges(),
        "cutmix": None,
    }[name]


def _parse_settings(name: str, sub: dict) -> AugSettings:
    where = f"config.augmentations.{name}"
    common = {"enabled": bool, "probability": (int, float)}
    try:
        if name == "flip" or name == "cutmix":
            _check_keys(sub, where, allowed=common)
            params = None
        elif name == "vscale":
            _check_keys(sub, where, allowed={**common, "range": list})
            lo, hi = _interval(sub.get("range", [0.9, 1.1]), f"{where}.range")
            if not 0 < lo <= hi:
                raise ConfigError(f"{where}.range: bounds must satisfy 0 < lo <= hi")
            params = (float(lo), float(hi))
        elif name == "fdda":
            _check_keys(sub, where, allowed={**common, "order": int, "a1": list,
                                             "a2": list, "a0_policy": str, "higher": list})
            params = fdda.FddaRanges(
                a1=_interval(sub.get("a1", (-0.5, 0.5)), f"{where}.a1"),
                a2=_interval(sub.get("a2", (-0.0002, 0.0002)), f"{where}.a2"),
                a0_policy=sub.get("a0_policy", "keep_in_frame"),
                order=sub.get("order", 2),
                higher=tuple(_interval(h, f"{where}.higher[{i}]")
                             for i, h in enumerate(sub.get("higher", ()))),
            )
        elif name == "prlc":
            _check_keys(sub, where, allowed={**common, "l": list, "w": list,
                                             "max_restarts": int})
            l_lo, l_hi = _interval(sub.get("l", (1, 3)), f"{where}.l")
            w_lo, w_hi = _interval(sub.get("w", (20, None)), f"{where}.w")
            params = prlc.PrlcParams(l_range=(int(l_lo), int(l_hi)),
                                     w_range=(int(w_lo), None if w_hi is None else int(w_hi)),
                                     max_restarts=sub.get("max_restarts", 10))
        elif name == "affine":
            _check_keys(sub, where, allowed={**common, "rotation": list,
                                             "translate_frac": list, "scale": list})
            params = baseline.AffineRanges(
                rotation=_interval(sub.get("rotation", (-10.0, 10.0)), f"{where}.rotation"),
                translate_frac=_interval(sub.get("translate_frac", (-0.1, 0.1)),
                                         f"{where}.translate_frac"),
                scale=_interval(sub.get("scale", (0.9, 1.1)), f"{where}.scale"),
            )
        else:  # pragma: no cover
            raise ConfigError(f"{where}: unhandled augmentation")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return AugSettings(enabled=sub.get("enabled", False),
                       probability=float(sub.get("probability", 0.5)), params=params)


def _settings_to_dict(name: str, s: AugSettings) -> dict:
    out: dict = {"enabled": s.enabled, "probability": s.probability}
    if name == "vscale":
        out["range"] = list(s.params)
    elif name == "fdda":
        r: fdda.FddaRanges = s.params
        out.update({"order": r.order, "a1": list(r.a1), "a2": list(r.a2),
                    "a0_policy": r.a0_policy})
        if r.higher:
            out["higher"] = [list(h) for h in r.higher]
    elif name == "prlc":
        p: prlc.PrlcParams = s.params
        out.update({"l": list(p.l_range), "w": list(p.w_range),
                    "max_restarts": p.max_restarts})
    elif name == "affine":
        a: baseline.AffineRanges = s.params
        out.update({"rotation": list(a.rotation), "translate_frac": list(a.translate_frac),
                    "scale": list(a.scale)})
    return out


def list_presets() -> list[str]:
    pkg = resources.files("octaug") / "presets"
    return sorted(p.name.removesuffix(".json") for p in pkg.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    """Raw config dict for a shipped per-dataset preset ('mshc', 'duke_dme')."""
    pkg = resources.files("octaug") / "presets" / f"{name}.json"
    try:
        return json.loads(pkg.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"no preset named {name!r}; have {list_presets()}") from None


# ---------------------------------------------------------------------------
# Per-sample augmentation

@dataclass(frozen=True)
class AugRecord:
    """Provenance of one augmentation decision for one (sample, epoch)."""

    name: str
    probability: float
    fired: bool
    params: dict | None = None
    note: str | None = None

    def to_json_dict(self) -> dict:
        out = {"name": self.name, "probability": self.probability, "fired": self.fired,
               "params": self.params}
        if self.note:
            out["note"] = self.note
        return out


PartnerLoader = Callable[[int], tuple[str, Sample]]


def augment_sample(sample: Sample, sample_index: int, epoch: int, config: PipelineConfig,
                   partner_count: int = 0,
                   partner_loader: PartnerLoader | None = None) -> tuple[Sample, list[AugRecord]]:
    """Coin-flip and apply each enabled augmentation in configured order.

    partner_count/partner_loader provide the other samples of the dataset
    for the two-sample mix (indices exclude this sample).
    """
    scheme = SeedScheme(config.master_seed)
    sample_seed = scheme.sample_seed(sample_index, epoch)
    records: list[AugRecord] = []
    for name in config.enabled_order():
        settings = config.augmentations[name]
        stream = Stream(mix64(sample_seed, AUG_IDS[name]))
        fired = stream.coin(settings.probability)
        if not fired:
            records.append(AugRecord(name, settings.probability, False))
            continue
        sample, record = _apply_one(name, settings, sample, stream,
                                    partner_count, partner_loader)
        records.append(record)
    return sample, records


def _apply_one(name: str, settings: AugSettings, sample: Sample, stream: Stream,
               partner_count: int, partner_loader: PartnerLoader | None) -> tuple[Sample, AugRecord]:
    p = settings.probability
    if name == "flip":
        return baseline.horizontal_flip(sample), AugRecord(name, p, True, {})
    if name == "vscale":
        factor = stream.uniform(*settings.params)
        return baseline.vertical_scale(sample, factor), AugRecord(name, p, True, {"factor": factor})
    if name == "fdda":
        try:
            coeffs = fdda.sample_coeffs(settings.params, sample, stream)
        except DegenerateSample:
            return sample, AugRecord(name, p, True, None, note="degenerate_sample")
        return fdda.apply_to_volume(sample, coeffs), AugRecord(
            name, p, True, {"coeffs": list(coeffs.values)})
    if name == "prlc":
        out, draw = prlc.apply_prlc_detailed(sample, settings.params, stream)
        if draw is None:
            return out, AugRecord(name, p, True, None, note="no_space")
        return out, AugRecord(name, p, True, {
            "l": draw.l, "w": draw.w, "layer_interval": list(draw.layer_interval),
            "start_col": draw.start_col, "anchor": list(draw.anchor),
            "restarts": draw.restarts})
    if name == "affine":
        params = baseline.sample_affine_params(settings.params, sample.height,
                                               sample.width, stream)
        return baseline.random_affine(sample, params), AugRecord(name, p, True, {
            "rotation_deg": params.rotation_deg, "translate": list(params.translate),
            "scale": params.scale})
    if name == "cutmix":
        if partner_count < 1 or partner_loader is None:
            return sample, AugRecord(name, p, True, None, note="no_partner")
        pick = stream.randint(0, partner_count - 1)
        partner_id, partner = partner_loader(pick)
        rect = baseline.draw_cut_rect(sample.height, sample.width, stream)
        out = baseline.cutmix_at(sample, partner, rect)
        return out, AugRecord(name, p, True, {
            "partner": partner_id,
            "rect": [rect.row_lo, rect.row_hi, rect.col_lo, rect.col_hi]})
    raise ConfigError(f"unknown augmentation {name!r}")  # pragma: no cover


def replay_records(sample: Sample, records: list[AugRecord],
                   partner_lookup: Callable[[str], Sample] | None = None) -> Sample:
    """Reproduce a provenance line: apply exactly the logged transforms."""
    for rec in records:
        if not rec.fired or rec.params is None:
            continue
        if rec.name == "flip":
            sample = baseline.horizontal_flip(sample)
        elif rec.name == "vscale":
            sample = baseline.vertical_scale(sample, rec.params["factor"])
        elif rec.name == "fdda":
            sample = fdda.apply_to_volume(sample, fdda.CoeffVector(tuple(rec.params["coeffs"])))
        elif rec.name == "prlc":
            patch = prlc.extract_patch(sample, tuple(rec.params["layer_interval"]),
                                       rec.params["start_col"], rec.params["w"])
            sample = prlc.paste_patch(sample, patch, tuple(rec.params["anchor"]))
        elif rec.name == "affine":
            params = baseline.AffineParams(rotation_deg=rec.params["rotation_deg"],
                                           translate=tuple(rec.params["translate"]),
                                           scale=rec.params["scale"])
            sample = baseline.random_affine(sample, params)
        elif rec.name == "cutmix":
            if partner_lookup is None:
                raise ConfigError("replaying a two-sample mix needs a partner lookup")
            partner = partner_lookup(rec.params["partner"])
            rect = baseline.CutRect(*rec.params["rect"])
            sample = baseline.cutmix_at(sample, partner, rect)
        else:
            raise ConfigError(f"provenance names unknown augmentation {rec.name!r}")
    return sample


# ---------------------------------------------------------------------------
# Runs

_worker_datasets: dict[str, Dataset] = {}


def _open_dataset_cached(root: str) -> Dataset:
    ds = _worker_datasets.get(root)
    if ds is None:
        ds = Dataset.open(root)
        _worker_datasets[root] = ds
    return ds


def _augment_job(args: tuple) -> dict:
    config_doc, epoch, sample_index, subject_id = args
    config = PipelineConfig.from_json_dict(config_doc)
    ds = _open_dataset_cached(config.dataset)
    sample = ds.load_sample(subject_id)
    others = [sid for sid in ds.subject_ids if sid != subject_id]

    def load_partner(i: int) -> tuple[str, Sample]:
        return others[i], ds.load_sample(others[i])

    out, records = augment_sample(sample, sample_index, epoch, config,
                                  partner_count=len(others), partner_loader=load_partner)
    epoch_dir = Path(config.output) / f"epoch_{epoch:03d}"
    from .storage import write_surfaces, write_volume
    write_volume(out.volume, epoch_dir / "volumes" / f"{subject_id}.vol")
    write_surfaces(out.surfaces, epoch_dir / "surfaces" / f"{subject_id}.json")
    return {"epoch": epoch, "sample_index": sample_index, "subject": subject_id,
            "augmentations": [r.to_json_dict() for r in records]}


def run_augment(config: PipelineConfig) -> dict:
    """Execute one augmentation run; returns a small summary dict.

    Rerunning with the same config reproduces the output tree bitwise,
    for any worker count.
    """
    ds = Dataset.open(config.dataset)
    out_root = Path(config.output)
    out_root.mkdir(parents=True, exist_ok=True)

    config_doc = config.to_json_dict()
    for epoch in range(config.epochs):
        epoch_dir = out_root / f"epoch_{epoch:03d}"
        (epoch_dir / "volumes").mkdir(parents=True, exist_ok=True)
        (epoch_dir / "surfaces").mkdir(parents=True, exist_ok=True)

    jobs = [(config_doc, epoch, idx, sid)
            for epoch in range(config.epochs)
            for idx, sid in enumerate(ds.subject_ids)]
    if config.workers == 1:
        results = [_augment_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_augment_job, jobs))

    results.sort(key=lambda r: (r["epoch"], r["sample_index"]))
    log_path = out_root / "provenance.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in results:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")

    # Per-epoch manifests mirror the source (masks are dropped: augmented
    # pixels no longer align with pass-through masks).
    for epoch in range(config.epochs):
        epoch_dir = out_root / f"epoch_{epoch:03d}"
        manifest = replace(ds.manifest,
                           subjects=[replace(e, mask=None) for e in ds.manifest.subjects])
        from .storage import save_manifest
        save_manifest(manifest, epoch_dir)

    (out_root / "config.json").write_text(
        json.dumps(config_doc, indent=2, sort_keys=True, allow_nan=False) + "\n",
        encoding="utf-8")
    return {"samples": len(ds.subject_ids), "epochs": config.epochs,
            "log": str(log_path)}


def run_eval(pred_root: str | Path, gt_root: str | Path, resolution_um_per_px: float,
             out_file: str | Path | None = None, weighted: bool = False) -> EvalReport:
    pred = Dataset.open(pred_root)
    gt = Dataset.open(gt_root)
    pred_surfaces = {sid: pred.load_surfaces(sid) for sid in pred.subject_ids}
    gt_surfaces = {sid: gt.load_surfaces(sid) for sid in gt.subject_ids}
    report = evaluate_run(pred_surfaces, gt_surfaces, resolution_um_per_px,
                          weighted=weighted)
    if out_file is not None:
        Path(out_file).write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n",
            encoding="utf-8")
    return report


def render_eval_text(report: EvalReport) -> str:
    lines = ["subject      MAD [um]   evaluated  skipped"]
    for sid, r in sorted(report.per_subject.items()):
        lines.append(f"{sid:<12} {r.overall_um:>8.3f}   {r.columns_evaluated:>9d}  {r.columns_skipped:>7d}")
    per_surface = "  ".join("   n/a" if v is None else f"{v:6.3f}"
                            for v in report.per_surface_mean_um)
    lines.append(f"per-surface mean [um]: {per_surface}")
    lines.append(f"MAD over subjects: {report.formatted} um")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Preview and phantom generation

def _parse_aug_spec(spec: str) -> tuple[str, dict[str, str]]:
    name, _, rest = spec.partition(":")
    name = name.strip()
    kv: dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigError(f"augment spec {spec!r}: expected key=value, got {item!r}")
            kv[key.strip()] = val.strip()
    return name, kv


def _preview_transform(sample: Sample, name: str, kv: dict[str, str],
                       stream: Stream, partner: Sample | None) -> Sample:
    def num(key, default=None):
        if key in kv:
            return float(kv.pop(key))
        return default

    if name == "none":
        out = sample
    elif name == "flip":
        out = baseline.horizontal_flip(sample)
    elif name == "vscale":
        factor = num("factor")
        if factor is None:
            factor = stream.uniform(0.9, 1.1)
        out = baseline.vertical_scale(sample, factor)
    elif name == "fdda":
        explicit = sorted(k for k in kv if k.startswith("a") and k[1:].isdigit())
        if explicit:
            order = max(int(k[1:]) for k in explicit)
            coeffs = fdda.CoeffVector(tuple(float(kv.pop(f"a{k}", "0"))
                                            for k in range(order + 1)))
        else:
            coeffs = fdda.sample_coeffs(fdda.FddaRanges(), sample, stream)
        out = fdda.apply_to_volume(sample, coeffs)
    elif name == "prlc":
        l = kv.pop("l", None)
        w = kv.pop("w", None)
        params = prlc.PrlcParams(
            l_range=(int(l), int(l)) if l else (1, 3),
            w_range=(int(w), int(w)) if w else (20, None))
        out = prlc.apply_prlc(sample, params, stream)
    elif name == "affine":
        out = baseline.random_affine(sample, baseline.AffineParams(
            rotation_deg=num("rotation", 0.0),
            translate=(num("rows", 0.0), num("cols", 0.0)),
            scale=num("scale", 1.0)))
    elif name == "cutmix":
        if partner is None:
            raise ConfigError("cutmix preview needs a dataset with at least two subjects")
        out = baseline.cutmix(sample, partner, stream)
    else:
        raise ConfigError(f"unknown augmentation {name!r} in preview spec")
    if kv:
        raise ConfigError(f"augment spec for {name!r}: unknown keys {sorted(kv)}")
    return out


def run_preview(dataset_root: str | Path, slice_index: int, aug_spec: str, seed: int,
                out_dir: str | Path, subject: str | None = None) -> tuple[Path, Path]:
    """Write before/after overlay PNGs for one slice; deterministic in seed."""
    ds = Dataset.open(dataset_root)
    sid = subject if subject is not None else ds.subject_ids[0]
    sample = ds.load_sample(sid)
    name, kv = _parse_aug_spec(aug_spec)
    stream = Stream(mix64(seed, AUG_IDS.get(name, 0)))
    partner = None
    if name == "cutmix":
        others = [s for s in ds.subject_ids if s != sid]
        partner = ds.load_sample(others[0]) if others else None
    after = _preview_transform(sample, name, kv, stream, partner)
    out_dir = Path(out_dir)
    before_png = render_overlay(sample, slice_index, out_dir / "before.png")
    after_png = render_overlay(after, slice_index, out_dir / "after.png")
    return before_png, after_png


def run_gen_phantom(spec_path: str | Path, out_root: str | Path) -> dict:
    """Generate a manifest-complete synthetic dataset from a spec file."""
    spec_path = Path(spec_path)
    try:
        doc = json.loads(spec_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{spec_path}: spec file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec_path}: not valid JSON ({exc})") from exc
    name, subjects, seed, base_spec = spec_from_json_dict(doc)
    if subjects < 1:
        raise ConfigError("phantom spec: subjects must be >= 1")

    writer = DatasetWriter(out_root, name=name)
    for i in range(subjects):
        sub_spec = replace(base_spec, subject_id=f"{name}{i + 1:02d}")
        sample = generate_phantom(sub_spec, seed=mix64(seed, i))
        writer.add_sample(sample, role="train")
    manifest = writer.finalize()
    return {"subjects": subjects, "out": str(out_root), "name": manifest.name}
