"""Explainable ensemble classification pipeline for synthetic brain phantoms.

Subpackages/modules:
    engine     -- dense tensors with reverse-mode autodiff, checkpoints
    networks   -- the two miniature CNN families and the weighted loss
    training   -- Adam, splits, folds, fit loop, cross-validation
    data       -- phantom generator, preprocessing, augmentation, dataset I/O
    ensemble   -- soft and hard voting
    saliency   -- Grad-CAM++ maps, thresholding, overlap metrics, overlays
    rules      -- clinical decision rule overlay (region features + rules)
    evalstats  -- classification metrics and model-comparison statistics
    pipeline   -- run orchestration (train/eval/case bundles)
    server     -- case-review HTTP API
    cli        -- command-line entry points
"""

__version__ = "0.1.0"
