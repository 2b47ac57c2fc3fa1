from .types import ImageGray, RoiMask, Sample, PhantomDataset, CLASS_NAMES, LABEL_BY_NAME
from .preprocess import normalize_minmax, resize_bilinear, to_grayscale
from .phantoms import GenerationError, generate_phantoms, CLASS_AREA_CM2
from .augment import AugmentConfig, augment, clahe
from .io import load_dataset, save_dataset, read_pgm, write_pgm, read_pbm, write_pbm

__all__ = [
    "ImageGray",
    "RoiMask",
    "Sample",
    "PhantomDataset",
    "CLASS_NAMES",
    "LABEL_BY_NAME",
    "normalize_minmax",
    "resize_bilinear",
    "to_grayscale",
    "GenerationError",
    "generate_phantoms",
    "CLASS_AREA_CM2",
    "AugmentConfig",
    "augment",
    "clahe",
    "load_dataset",
    "save_dataset",
    "read_pgm",
    "write_pgm",
    "read_pbm",
    "write_pbm",
]
