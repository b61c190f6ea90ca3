"""Label-consistent augmentation toolkit for layered volumetric scans.

Core pieces: exact column-wise polynomial shifts applied identically to
pixels and per-column surface labels (fdda), copy-paste of labeled layer
blocks into the unlabeled background (prlc), baseline/comparison
augmentations (baseline), the mean-absolute-distance metric (metrics),
bit-exact dataset files (storage), synthetic phantoms (phantom), and a
deterministic seeded pipeline (pipeline) behind the `octaug` CLI.
"""

from .baseline import (AffineParams, AffineRanges, CutRect, cutmix, cutmix_at,
                       horizontal_flip, random_affine, vertical_scale)
from .core import (INVALID, Center, LayerTopology, Sample, SurfaceSet, Violation,
                   Volume, center_index, valid_mask, validate_sample)
from .errors import (ConfigError, CorruptHeader, DegenerateSample, DimensionMismatch,
                     EmptyList, EmptyPatch, InfeasibleSpec, InvalidL, NonPositiveFactor,
                     NoSpace, NoValidColumns, OctaugError, SingularTransform,
                     SliceOutOfRange, SubjectMismatch, TruncatedPayload)
from .fdda import (CoeffVector, FddaRanges, ShiftField, apply_to_image,
                   apply_to_surfaces, apply_to_volume, compute_shift_field,
                   sample_coeffs)
from .metrics import EvalReport, MadReport, evaluate_run, mad, subject_sd
from .overlay import render_overlay
from .phantom import PhantomSpec, generate_phantom
from .pipeline import PipelineConfig, augment_sample, run_augment, run_eval
from .prlc import (LayerPatch, PrlcParams, apply_prlc, choose_layer_block,
                   extract_patch, find_paste_anchor)
from .seeding import SeedScheme, Stream, derive_rng, mix64
from .storage import (Dataset, DatasetWriter, Manifest, read_surfaces, read_volume,
                      validate_dataset, write_surfaces, write_volume)

__version__ = "0.1.0"
