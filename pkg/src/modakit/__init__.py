"""Preprocessing, augmentation, ensembling and evaluation tools for
cross-modality vestibular schwannoma / cochlea segmentation."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    ManifestError,
    ModakitError,
    ShapeError,
    UndefinedMetricError,
    UnsupportedError,
)
from .volume import BinaryMask, LabelVolume, ScalarVolume
from .nifti import read_nifti, write_nifti
from .pipeline import (
    PipelineConfig,
    SliceStack,
    compute_center_axis,
    crop_xy,
    normalize_intensity,
    preprocess_case,
    resample,
    slice_z,
    stack_z,
)
from .augment import AugmentSpec, expand_dataset, reduce_tumor_signal
from .metrics import aggregate, assd, dice, evaluate_case, extract_surface
from .fid import GaussianSummary, fid_between_files, frechet_distance, summarize
from .ensemble import ProbabilityVolume, argmax_labels, average_probs, kfold_split
