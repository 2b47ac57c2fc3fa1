"""The two miniature CNN families and the class-weighted loss.

``mobile_mini`` keeps the inverted-residual mechanism (1x1 expand -> depthwise
3x3 -> 1x1 project, skip when shapes match); ``dense_mini`` keeps dense
connectivity (every layer's output concatenated onto its input) with a 1x1 +
avg-pool transition between blocks. Both end in global average pooling,
dropout and a 3-way dense head with softmax.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import engine as E
from .engine import Tensor

FAMILIES = ("mobile_mini", "dense_mini")
NUM_CLASSES = 3
CLASS_NAMES = ("glioma", "meningioma", "pituitary")


@dataclass
class ModelSpec:
    family: str
    input_size: int = 64
    channels: int = 1
    num_classes: int = 3
    stem_width: int = 16
    expand_ratio: int = 4          # mobile_mini bottleneck expansion
    block_width: int = 24          # mobile_mini inverted-residual output channels
    top_width: int = 96            # mobile_mini final 1x1 conv before pooling
    growth_rate: int = 8           # dense_mini per-layer growth
    layers_per_block: int = 4      # dense_mini layers in each dense block
    transition_compress: float = 0.5
    dropout_rate: float = 0.30
    feature_gain: float = 4.0      # fixed gain after pooling; stands in for the
                                   # O(1) feature scale normalization layers give

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unsupported family {self.family!r}; pick one of {FAMILIES}")
        if self.num_classes != NUM_CLASSES:
            raise ValueError("this pipeline is fixed to 3 classes")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.input_size < 8 or self.input_size % 4:
            raise ValueError("input_size must be >= 8 and divisible by 4")

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(d: dict) -> "ModelSpec":
        spec = ModelSpec(**d)
        spec.validate()
        return spec


@dataclass
class ModelHandle:
    spec: ModelSpec
    params: "OrderedDict[str, Tensor]"
    groups: dict                      # name -> "base" | "head"
    seed: int
    frozen: bool = False
    step: int = field(default=0)      # training forward counter for dropout keys

    def named_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data) for k, v in self.params.items())

    def load_arrays(self, arrays) -> None:
        for name, arr in arrays.items():
            if name not in self.params:
                raise KeyError(f"checkpoint parameter {name!r} unknown to this model")
            if tuple(arr.shape) != self.params[name].shape:
                raise E.ShapeError(f"checkpoint {name}: shape {arr.shape} != {self.params[name].shape}")
            self.params[name].data = np.array(arr, dtype=np.float64)


def _he_conv(rng: np.random.Generator, f: int, c: int, kh: int, kw: int) -> np.ndarray:
    fan_in = c * kh * kw
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(f, c, kh, kw))


def _he_depthwise(rng: np.random.Generator, c: int, kh: int, kw: int) -> np.ndarray:
    fan_in = kh * kw
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c, kh, kw))


def _he_dense(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / d), size=(k, d))


def build_model(spec: ModelSpec, seed: int) -> ModelHandle:
    """He-initialized parameters drawn in a fixed order from the seed."""
    spec.validate()
    rng = np.random.default_rng(seed)
    params: "OrderedDict[str, Tensor]" = OrderedDict()
    groups: dict = {}

    def p(name: str, arr: np.ndarray, group: str) -> None:
        params[name] = Tensor(arr, requires_grad=True)
        groups[name] = group

    s = spec
    if s.family == "mobile_mini":
        w0 = s.stem_width
        p("stem.w", _he_conv(rng, w0, s.channels, 3, 3), "base")
        p("stem.b", np.zeros(w0), "base")
        # block1 downsamples (no skip); block2 keeps shape and adds the residual
        for bi, (cin, cout) in enumerate(((w0, s.block_width), (s.block_width, s.block_width)),
                                         start=1):
            ce = cin * s.expand_ratio
            p(f"block{bi}.expand.w", _he_conv(rng, ce, cin, 1, 1), "base")
            p(f"block{bi}.expand.b", np.zeros(ce), "base")
            p(f"block{bi}.dw.w", _he_depthwise(rng, ce, 3, 3), "base")
            p(f"block{bi}.project.w", _he_conv(rng, cout, ce, 1, 1), "base")
            p(f"block{bi}.project.b", np.zeros(cout), "base")
        # MobileNetV2-style wide 1x1 conv before pooling
        p("top.w", _he_conv(rng, s.top_width, s.block_width, 1, 1), "base")
        p("top.b", np.zeros(s.top_width), "base")
        feat = s.top_width
    else:
        w0 = s.stem_width
        p("stem.w", _he_conv(rng, w0, s.channels, 3, 3), "base")
        p("stem.b", np.zeros(w0), "base")
        c = w0
        for li in range(s.layers_per_block):
            p(f"block1.layer{li}.w", _he_conv(rng, s.growth_rate, c, 3, 3), "base")
            p(f"block1.layer{li}.b", np.zeros(s.growth_rate), "base")
            c += s.growth_rate
        ct = max(1, int(round(c * s.transition_compress)))
        p("transition.w", _he_conv(rng, ct, c, 1, 1), "base")
        p("transition.b", np.zeros(ct), "base")
        c = ct
        for li in range(s.layers_per_block):
            p(f"block2.layer{li}.w", _he_conv(rng, s.growth_rate, c, 3, 3), "base")
            p(f"block2.layer{li}.b", np.zeros(s.growth_rate), "base")
            c += s.growth_rate
        feat = c
    p("head.w", _he_dense(rng, s.num_classes, feat), "head")
    p("head.b", np.zeros(s.num_classes), "head")
    return ModelHandle(spec=s, params=params, groups=groups, seed=seed)


def _forward_mobile(m: ModelHandle, x: Tensor) -> tuple[Tensor, Tensor]:
    P = m.params
    # MobileNet-family input mapping: [0,1] -> [-1,1]
    x = E.add_scalar(E.mul_scalar(x, 2.0), -1.0)
    h = E.relu6(E.conv2d(x, P["stem.w"], P["stem.b"], stride=2, padding=1))
    for bi, stride in ((1, 2), (2, 1)):
        e = E.relu6(E.conv2d(h, P[f"block{bi}.expand.w"], P[f"block{bi}.expand.b"]))
        d = E.relu6(E.depthwise_conv2d(e, P[f"block{bi}.dw.w"], stride=stride, padding=1))
        proj = E.conv2d(d, P[f"block{bi}.project.w"], P[f"block{bi}.project.b"])
        h = E.add(proj, h) if proj.shape == h.shape else proj
    # wide 1x1 conv + activation before pooling, as in the full architecture
    top = E.relu6(E.conv2d(h, P["top.w"], P["top.b"]))
    return top, top


def _forward_dense(m: ModelHandle, x: Tensor) -> tuple[Tensor, Tensor]:
    P = m.params
    # DenseNet-family input standardization (grayscale ImageNet stats)
    x = E.mul_scalar(E.add_scalar(x, -0.449), 1.0 / 0.226)
    # DenseNet-style stem: stride-2 conv plus 2x2 pool before the first block
    h = E.avg_pool2(E.relu(E.conv2d(x, P["stem.w"], P["stem.b"], stride=2, padding=1)))
    for li in range(m.spec.layers_per_block):
        new = E.conv2d(E.relu(h), P[f"block1.layer{li}.w"], P[f"block1.layer{li}.b"], padding=1)
        h = E.concat_channels(h, new)
    h = E.avg_pool2(E.conv2d(h, P["transition.w"], P["transition.b"]))
    for li in range(m.spec.layers_per_block):
        new = E.conv2d(E.relu(h), P[f"block2.layer{li}.w"], P[f"block2.layer{li}.b"], padding=1)
        h = E.concat_channels(h, new)
    # top activation before pooling, as in the full architecture
    top = E.relu(h)
    return top, top


def forward(model: ModelHandle, batch: Tensor, training: bool) -> tuple[Tensor, Tensor, dict]:
    """Returns (logits, probs, activations); activations expose "cam_target"."""
    batch = batch if isinstance(batch, Tensor) else Tensor(batch)
    n, c, h, w = batch.shape
    s = model.spec
    if c != s.channels or h != s.input_size or w != s.input_size:
        raise E.ShapeError(
            f"batch {batch.shape} does not match spec ({s.channels}, {s.input_size}, {s.input_size})"
        )
    if s.family == "mobile_mini":
        feat, cam = _forward_mobile(model, batch)
    else:
        feat, cam = _forward_dense(model, batch)
    pooled = E.mul_scalar(E.global_avg_pool(feat), s.feature_gain)
    if training:
        model.step += 1
    dropped = E.dropout(pooled, s.dropout_rate, training, (model.seed, model.step, 0))
    logits = E.dense(dropped, model.params["head.w"], model.params["head.b"])
    probs = E.softmax(logits)
    return logits, probs, {"cam_target": cam}


def compute_class_weights(counts) -> np.ndarray:
    """Balanced scheme w_c = N / (K * N_c); equal counts give unit weights."""
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts <= 0):
        raise ValueError(f"every class needs at least one sample, got counts {counts.tolist()}")
    n, k = counts.sum(), len(counts)
    return n / (k * counts.astype(np.float64))


def _check_one_hot(labels: np.ndarray) -> None:
    ok = (
        labels.ndim == 2
        and labels.shape[1] == NUM_CLASSES
        and np.all((labels == 0.0) | (labels == 1.0))
        and np.all(labels.sum(axis=1) == 1.0)
    )
    if not ok:
        raise ValueError("labels must be one-hot rows over the 3 classes")


def one_hot(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, NUM_CLASSES))
    out[np.arange(labels.size), labels] = 1.0
    return out


def weighted_cross_entropy(probs: Tensor, labels_one_hot: np.ndarray, weights) -> Tensor:
    """Mean over the batch of -w_c * log(p_c + 1e-12) at the true class."""
    labels_one_hot = np.asarray(labels_one_hot, dtype=np.float64)
    _check_one_hot(labels_one_hot)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (NUM_CLASSES,) or np.any(weights <= 0):
        raise ValueError("weights must be 3 positive reals")
    n = labels_one_hot.shape[0]
    coeff = -(labels_one_hot * weights[None, :]) / n
    return E.tsum(E.mul_array(E.log(E.add_scalar(probs, 1e-12)), coeff))


def set_frozen(model: ModelHandle, frozen: bool) -> None:
    """Freeze/unfreeze the base feature extractor (head always trains)."""
    model.frozen = bool(frozen)


def predict_probs(model: ModelHandle, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Inference-mode probabilities for [N,1,H,W] inputs, no tape recorded."""
    outs = []
    for i in range(0, x.shape[0], batch_size):
        _, probs, _ = forward(model, Tensor(x[i : i + batch_size]), training=False)
        outs.append(probs.data)
    return np.concatenate(outs, axis=0)
