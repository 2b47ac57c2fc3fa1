"""Supervised training: Adam, stratified splits/folds, fit loop, 5-fold CV.

The fit loop mirrors the usual Keras-style protocol: minibatch Adam updates,
validation loss monitored every epoch, checkpoint at the best validation
loss, ReduceLROnPlateau-style LR cuts, early stopping, and an initial phase
with the base feature extractor frozen.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import engine as E
from . import evalstats, networks
from .engine import Tensor
from .networks import ModelHandle, ModelSpec


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; carries the partial report."""

    def __init__(self, message: str, report: Optional["TrainReport"] = None):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    batch_size: int = 64
    epochs: int = 30
    early_stop_patience: int = 5
    plateau_factor: float = 0.1
    plateau_patience: int = 2
    min_lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    freeze_epochs: int = 3

    def validate(self) -> None:
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.early_stop_patience < 1 or self.plateau_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.freeze_epochs > self.epochs:
            raise ValueError("freeze_epochs cannot exceed epochs")


DEFAULT_LR = {"mobile_mini": 0.0005, "dense_mini": 0.0003}


def default_config(family: str, **overrides) -> TrainConfig:
    cfg = TrainConfig(learning_rate=DEFAULT_LR[family])
    for key, val in overrides.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown TrainConfig field {key!r}")
        setattr(cfg, key, val)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# splits and folds


def _round_half_up(x: float) -> int:
    # 1e-9 guard absorbs float noise in fraction*count products
    return int(math.floor(x + 0.5 + 1e-9))


def stratified_split(labels, test_fraction: float = 0.30, seed: int = 0):
    """Per-class round-half-up test counts; returns (train_idx, test_idx)."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    classes = np.unique(labels)
    counts = {c: int((labels == c).sum()) for c in classes}
    for c, n_c in counts.items():
        if n_c < 2:
            raise ValueError(f"class {c} has {n_c} sample(s); need at least 2")
    want = {c: _round_half_up(test_fraction * n_c) for c, n_c in counts.items()}
    total_target = _round_half_up(test_fraction * labels.size)
    drift = total_target - sum(want.values())
    if drift:
        largest = max(counts, key=lambda c: (counts[c], -c))
        want[largest] = min(max(want[largest] + drift, 0), counts[largest])
    rng = np.random.default_rng(seed)
    test_parts, train_parts = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        perm = rng.permutation(idx)
        test_parts.append(perm[: want[c]])
        train_parts.append(perm[want[c] :])
    train = np.sort(np.concatenate(train_parts)).astype(np.int64)
    test = np.sort(np.concatenate(test_parts)).astype(np.int64)
    return train, test


@dataclass
class FoldPlan:
    folds: list  # [(train_idx, val_idx), ...]

    @property
    def k(self) -> int:
        return len(self.folds)


def make_folds(labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k-fold plan; val folds partition the index set."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    classes = np.unique(labels)
    for c in classes:
        n_c = int((labels == c).sum())
        if n_c < k:
            raise ValueError(f"class {c} has {n_c} samples, fewer than k={k}")
    rng = np.random.default_rng(seed)
    val_sets: list[list[np.ndarray]] = [[] for _ in range(k)]
    for c in classes:
        perm = rng.permutation(np.flatnonzero(labels == c))
        for f in range(k):
            val_sets[f].append(perm[f::k])
    all_idx = np.arange(labels.size)
    folds = []
    for f in range(k):
        val = np.sort(np.concatenate(val_sets[f])).astype(np.int64)
        train = np.setdiff1d(all_idx, val).astype(np.int64)
        folds.append((train, val))
    return FoldPlan(folds=folds)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    skip: Optional[set] = None,
) -> None:
    """Standard bias-corrected Adam update, in place; ``skip`` names frozen groups."""
    state.t += 1
    b1t = 1.0 - beta1 ** state.t
    b2t = 1.0 - beta2 ** state.t
    for name, p in params.items():
        if skip and name in skip:
            continue
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in parameter {name!r} at step {state.t}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / b1t) / (np.sqrt(v / b2t) + eps)


# ---------------------------------------------------------------------------
# fit


@dataclass
class TrainReport:
    family: str
    seed: int
    epochs: list = field(default_factory=list)  # per-epoch dicts
    lr_trace: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stop_epoch: int = 0
    checkpoint: str = ""

    def to_json(self) -> dict:
        return asdict(self)


def _eval_split(model: ModelHandle, x: np.ndarray, y: np.ndarray, weights: np.ndarray,
                batch_size: int) -> tuple[float, float]:
    probs = networks.predict_probs(model, x, batch_size=batch_size)
    picked = probs[np.arange(y.size), y]
    loss = float(np.mean(-weights[y] * np.log(picked + 1e-12)))
    acc = float(np.mean(probs.argmax(axis=1) == y))
    return loss, acc


def fit(
    model: ModelHandle,
    train_xy: tuple[np.ndarray, np.ndarray],
    val_xy: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    checkpoint_stem,
    class_weights: Optional[np.ndarray] = None,
) -> TrainReport:
    """Train until early stopping or ``config.epochs``; restores best weights."""
    config.validate()
    x_train, y_train = train_xy
    x_val, y_val = val_xy
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("train and val sets must be non-empty")
    if class_weights is None:
        counts = np.bincount(y_train, minlength=networks.NUM_CLASSES)
        class_weights = networks.compute_class_weights(counts)
    checkpoint_stem = Path(checkpoint_stem)

    report = TrainReport(family=model.spec.family, seed=config.seed)
    state = AdamState()
    lr = config.learning_rate
    report.lr_trace.append(lr)
    es_wait = 0
    plateau_wait = 0
    onehots = networks.one_hot(y_train)

    for epoch in range(1, config.epochs + 1):
        networks.set_frozen(model, epoch <= config.freeze_epochs)
        skip = {n for n, grp in model.groups.items() if grp == "base"} if model.frozen else None
        order = np.random.default_rng((config.seed, 7, epoch)).permutation(x_train.shape[0])
        batch_losses = []
        correct = 0
        for start in range(0, order.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            with E.Tape() as tape:
                _, probs, _ = networks.forward(model, Tensor(x_train[idx]), training=True)
                loss = networks.weighted_cross_entropy(probs, onehots[idx], class_weights)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise DivergenceError(f"training loss became {loss_val} at epoch {epoch}", report)
            E.backward(loss)
            probs_data = probs.data
            tape.release()
            grads = {n: t.grad for n, t in model.params.items() if t.grad is not None}
            adam_step(
                model.named_arrays(), grads, state, lr,
                beta1=config.beta1, beta2=config.beta2, eps=config.eps, skip=skip,
            )
            for t in model.params.values():
                t.zero_grad()
            batch_losses.append((loss_val, idx.size))
            correct += int((probs_data.argmax(axis=1) == y_train[idx]).sum())

        train_loss = sum(l * n for l, n in batch_losses) / order.size
        train_acc = correct / order.size
        val_loss, val_acc = _eval_split(model, x_val, y_val, class_weights, config.batch_size)
        if not math.isfinite(val_loss):
            report.stop_epoch = epoch
            raise DivergenceError(f"validation loss became {val_loss} at epoch {epoch}", report)
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "train_acc": train_acc,
                "val_loss": val_loss,
                "val_acc": val_acc,
                "lr": lr,
            }
        )

        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            es_wait = 0
            plateau_wait = 0
            E.save_checkpoint(
                checkpoint_stem,
                model.named_arrays(),
                extra={"model_spec": model.spec.to_json(), "epoch": epoch, "val_loss": val_loss},
            )
        else:
            es_wait += 1
            plateau_wait += 1
            if plateau_wait >= config.plateau_patience:
                lr = max(lr * config.plateau_factor, config.min_lr)
                report.lr_trace.append(lr)
                plateau_wait = 0
        report.stop_epoch = epoch
        if es_wait >= config.early_stop_patience:
            break

    networks.set_frozen(model, False)
    arrays, _ = E.load_checkpoint(checkpoint_stem)
    model.load_arrays(arrays)
    report.checkpoint = str(checkpoint_stem)
    return report


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class CVReport:
    family: str
    master_seed: int
    folds: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def fold_seed(master_seed: int, fold: int, salt: int = 101) -> int:
    return int(np.random.SeedSequence((master_seed, salt, fold)).generate_state(1)[0])


METRIC_KEYS = ("accuracy", "macro_precision", "macro_recall", "macro_f1", "macro_dci")


def summarize_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> dict:
    cm = evalstats.confusion_matrix(y_true, y_pred)
    rep = evalstats.metrics(cm)
    return {
        "accuracy": rep.accuracy,
        "macro_precision": rep.macro["precision"],
        "macro_recall": rep.macro["recall"],
        "macro_f1": rep.macro["f1"],
        "macro_dci": rep.macro["dci"],
    }


def run_cv(
    x: np.ndarray,
    y: np.ndarray,
    spec: ModelSpec,
    config: TrainConfig,
    fold_plan: Optional[FoldPlan] = None,
    x_aug: Optional[np.ndarray] = None,
    checkpoint_dir=None,
    k: int = 5,
) -> CVReport:
    """Train one family across stratified folds; fresh per-fold seeds.

    ``x_aug``, when given, holds exactly one augmented copy per sample; a
    fold trains on its train indices plus their augmented copies, and is
    validated on untouched originals.
    """
    if fold_plan is None:
        fold_plan = make_folds(y, k=k, seed=config.seed)
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else Path("runs/_cv")
    report = CVReport(family=spec.family, master_seed=config.seed)
    for f, (tr_idx, va_idx) in enumerate(fold_plan.folds):
        seed_f = fold_seed(config.seed, f)
        cfg = TrainConfig(**{**asdict(config), "seed": seed_f})
        model = networks.build_model(spec, seed_f)
        x_tr, y_tr = x[tr_idx], y[tr_idx]
        if x_aug is not None:
            x_tr = np.concatenate([x_tr, x_aug[tr_idx]], axis=0)
            y_tr = np.concatenate([y_tr, y[tr_idx]], axis=0)
        stem = checkpoint_dir / f"{spec.family}_fold{f}"
        train_report = fit(model, (x_tr, y_tr), (x[va_idx], y[va_idx]), cfg, stem)
        val_probs = networks.predict_probs(model, x[va_idx], batch_size=config.batch_size)
        fold_metrics = summarize_predictions(y[va_idx], val_probs.argmax(axis=1))
        report.folds.append(
            {
                "fold": f,
                "seed": seed_f,
                "checkpoint": str(stem),
                "metrics": fold_metrics,
                "val_indices": va_idx.tolist(),
                "val_probs": val_probs.tolist(),
                "train_report": train_report.to_json(),
            }
        )
    for key in METRIC_KEYS:
        vals = np.array([fr["metrics"][key] for fr in report.folds])
        report.mean[key] = float(vals.mean())
        report.sd[key] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return report
