"""Seven-day FCM-sequence land-use classifier: window assembly, dataset
splitting, the 3-D convolutional network, training, and per-class
precision/recall/F1 evaluation.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .nn import (Adam, Conv3d, Dense, ExtentUnderflowError, Module,
                 cross_entropy, maxpool3d, softmax)
from .soundscape import LAND_USE_NAMES, LandUseClass, N_LAND_USE, TimeCode
from .tensor import Tensor

__all__ = [
    "FcmSequence", "SplitSpec", "ClassMetrics", "ClassifierScale",
    "assemble_sequences", "split_dataset", "build_classifier",
    "train_classifier", "predict", "evaluate", "metrics_to_json",
    "render_metrics_table",
]

SEQUENCE_LENGTH = 7


class TooFewSequencesError(ValueError):
    pass


class EmptySplitError(ValueError):
    pass


@dataclass
class FcmSequence:
    """Seven consecutive days of FCM images for one device."""

    tensor: np.ndarray  # (7, side, side)
    device_id: str
    start_date: TimeCode
    label: LandUseClass

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=np.float64)
        if self.tensor.ndim != 3 or self.tensor.shape[0] != SEQUENCE_LENGTH:
            raise ValueError(
                f"sequence tensor must be (7, side, side), got "
                f"{self.tensor.shape}")


@dataclass(frozen=True)
class SplitSpec:
    fractions: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    scope: str = "per_device"  # or "cross_device"

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(
                f"fractions {self.fractions} must sum to 1")
        if self.scope not in ("per_device", "cross_device"):
            raise ValueError(f"unknown split scope {self.scope!r}")


def assemble_sequences(entries: Sequence[Tuple[str, TimeCode, LandUseClass,
                                               np.ndarray]],
                       length: int = SEQUENCE_LENGTH) -> List[FcmSequence]:
    """Slide a ``length``-day window over each device's consecutive-date runs.

    ``entries`` are (device_id, date, label, fcm_image) records; gaps in the
    calendar break runs, overlapping windows are kept.
    """
    by_device: Dict[str, list] = {}
    labels: Dict[str, LandUseClass] = {}
    for device_id, date, label, image in entries:
        by_device.setdefault(device_id, []).append((date.date_code(), image))
        labels[device_id] = label
    sequences: List[FcmSequence] = []
    for device_id in sorted(by_device):
        recs = sorted(by_device[device_id], key=lambda r: r[0])
        run: list = []
        prev: Optional[_dt.date] = None
        for date, image in recs:
            d = date.date()
            if prev is not None and (d - prev).days != 1:
                sequences.extend(
                    _windows(run, device_id, labels[device_id], length))
                run = []
            run.append((date, image))
            prev = d
        sequences.extend(_windows(run, device_id, labels[device_id], length))
    return sequences


def _windows(run: list, device_id: str, label: LandUseClass,
             length: int) -> List[FcmSequence]:
    out = []
    for start in range(len(run) - length + 1):
        window = run[start:start + length]
        out.append(FcmSequence(
            np.stack([img for _, img in window]),
            device_id, window[0][0], label))
    return out


def split_dataset(sequences: Sequence[FcmSequence], spec: SplitSpec
                  ) -> Tuple[List[FcmSequence], List[FcmSequence],
                             List[FcmSequence]]:
    """Seeded 60/20/20 partition of sequences into (train, val, eval).

    ``cross_device`` scope additionally holds out one whole device per class
    for evaluation; its sequences never enter train or val.
    """
    sequences = list(sequences)
    if len(sequences) < 5:
        raise TooFewSequencesError(
            f"need at least 5 sequences, got {len(sequences)}")
    rng = np.random.default_rng(spec.seed)
    if spec.scope == "cross_device":
        by_class: Dict[int, list] = {}
        for s in sequences:
            by_class.setdefault(s.label.id, [])
            if s.device_id not in by_class[s.label.id]:
                by_class[s.label.id].append(s.device_id)
        holdout = set()
        for cid in sorted(by_class):
            devices = sorted(by_class[cid])
            holdout.add(devices[int(rng.integers(len(devices)))])
        eval_set = [s for s in sequences if s.device_id in holdout]
        rest = [s for s in sequences if s.device_id not in holdout]
        order = rng.permutation(len(rest))
        f_train = spec.fractions[0] / (spec.fractions[0] + spec.fractions[1])
        n_train = int(round(f_train * len(rest)))
        train = [rest[i] for i in order[:n_train]]
        val = [rest[i] for i in order[n_train:]]
        return train, val, eval_set
    order = rng.permutation(len(sequences))
    n = len(sequences)
    n_train = int(round(spec.fractions[0] * n))
    n_val = int(round(spec.fractions[1] * n))
    train = [sequences[i] for i in order[:n_train]]
    val = [sequences[i] for i in order[n_train:n_train + n_val]]
    eval_set = [sequences[i] for i in order[n_train + n_val:]]
    return train, val, eval_set


@dataclass(frozen=True)
class ClassifierScale:
    """Geometry of the 3-D conv front end.

    The full-scale variant (side 256) uses the 6x8x8 kernel with stride
    (1, 4, 4); the desk-scale variant shrinks the spatial kernel and stride
    proportionally.  The pooling window depth is clamped to the available
    feature-map depth, which at full scale is smaller than the nominal
    window.
    """

    side: int
    kernel: Tuple[int, int, int]
    stride: Tuple[int, int, int]
    channels: int = 32

    @classmethod
    def paper(cls) -> "ClassifierScale":
        return cls(256, (6, 8, 8), (1, 4, 4))

    @classmethod
    def desk(cls) -> "ClassifierScale":
        return cls(64, (6, 4, 4), (1, 2, 2))


class SequenceClassifier(Module):
    """conv3d + maxpool3d front end, dense halving chain to 64, 9-way output."""

    def __init__(self, scale: ClassifierScale, classes: int = N_LAND_USE,
                 seed: int = 0, clamp_pool_depth: bool = True):
        self.scale = scale
        self.classes = classes
        rng = np.random.default_rng(seed)
        kd, kh, kw = scale.kernel
        sd, sh, sw = scale.stride
        d = SEQUENCE_LENGTH
        conv_d = (d - kd) // sd + 1
        conv_s = (scale.side - kh) // sh + 1
        if conv_d < 1 or conv_s < 1:
            raise ExtentUnderflowError(
                f"conv3d output extent underflow: depth {conv_d}, "
                f"side {conv_s}")
        pool_kd = kd
        if kd > conv_d:
            if not clamp_pool_depth:
                raise ExtentUnderflowError(
                    f"maxpool3d depth window {kd} exceeds feature depth "
                    f"{conv_d}")
            pool_kd = conv_d
        pool_d = (conv_d - pool_kd) // sd + 1
        pool_s = (conv_s - kh) // sh + 1
        if pool_d < 1 or pool_s < 1:
            raise ExtentUnderflowError(
                f"maxpool3d output extent underflow: depth {pool_d}, "
                f"side {pool_s}")
        self.conv = Conv3d(1, scale.channels, (kd, kh, kw), rng,
                           stride=(sd, sh, sw), name="conv3d")
        self.pool_window = (pool_kd, kh, kw)
        self.pool_stride = (sd, sh, sw)
        flat = scale.channels * pool_d * pool_s * pool_s
        width = 1 << int(np.floor(np.log2(flat)))
        widths = []
        while width >= 64:
            widths.append(width)
            width //= 2
        self.dense_chain = []
        prev = flat
        for i, w in enumerate(widths):
            self.dense_chain.append(Dense(prev, w, rng, f"fc{i}"))
            prev = w
        self.out = Dense(prev, classes, rng, "out")
        self._buffers = {}

    def logits(self, x: Tensor) -> Tensor:
        h = self.conv(x).relu()
        h = maxpool3d(h, self.pool_window, self.pool_stride)
        h = h.reshape(h.shape[0], -1)
        for layer in self.dense_chain:
            h = layer(h).relu()
        return self.out(h)

    def __call__(self, x: Tensor) -> Tensor:
        return softmax(self.logits(x), axis=-1)


def build_classifier(side: Optional[int] = None, classes: int = N_LAND_USE,
                     scale: Optional[ClassifierScale] = None,
                     seed: int = 0,
                     clamp_pool_depth: bool = True) -> SequenceClassifier:
    if scale is None:
        scale = (ClassifierScale.paper() if side == 256
                 else ClassifierScale.desk())
        if side is not None:
            scale = ClassifierScale(side, scale.kernel, scale.stride,
                                    scale.channels)
    return SequenceClassifier(scale, classes, seed, clamp_pool_depth)


def _batchify(seqs: Sequence[FcmSequence]):
    x = np.stack([s.tensor for s in seqs])[:, None, :, :, :]
    y = np.array([s.label.id - 1 for s in seqs], dtype=np.intp)
    return x, y


def _accuracy(model: SequenceClassifier, seqs: Sequence[FcmSequence],
              batch: int = 32) -> float:
    if not seqs:
        return 0.0
    hits = 0
    for start in range(0, len(seqs), batch):
        chunk = seqs[start:start + batch]
        x, y = _batchify(chunk)
        logits = model.logits(Tensor(x))
        hits += int((logits.data.argmax(axis=1) == y).sum())
    return hits / len(seqs)


def train_classifier(splits, epochs: int = 100, lr: float = 1e-4,
                     seed: int = 0, batch_size: int = 16,
                     model: Optional[SequenceClassifier] = None,
                     classes: int = N_LAND_USE,
                     scale: Optional[ClassifierScale] = None,
                     progress: Optional[callable] = None):
    """Cross-entropy training with Adam; keeps the best-on-validation state.

    Returns (model, history); history rows are
    (epoch, train_loss, train_acc, val_acc).
    """
    train, val, _ = splits
    if not train:
        raise EmptySplitError("training split is empty")
    if model is None:
        side = train[0].tensor.shape[-1]
        model = build_classifier(side=side, classes=classes, scale=scale,
                                 seed=seed)
    opt = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed + 1)
    history: List[tuple] = []
    best_state = model.state_dict()
    best_val = -1.0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        loss_sum, batches = 0.0, 0
        for start in range(0, len(train), batch_size):
            chunk = [train[i] for i in order[start:start + batch_size]]
            x, y = _batchify(chunk)
            loss = cross_entropy(model.logits(Tensor(x)), y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += float(loss.data)
            batches += 1
        train_acc = _accuracy(model, train)
        val_acc = _accuracy(model, val) if val else train_acc
        history.append((epoch, loss_sum / batches, train_acc, val_acc))
        if val_acc > best_val:
            best_val = val_acc
            best_state = model.state_dict()
        if progress is not None:
            progress(epoch, loss_sum / batches, train_acc, val_acc)
    model.load_state_dict(best_state)
    return model, history


def predict(model: SequenceClassifier, sequence: FcmSequence) -> np.ndarray:
    """Class-probability vector for one sequence."""
    x = sequence.tensor[None, None, :, :, :]
    return model(Tensor(x)).data[0].copy()


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------

@dataclass
class ClassMetrics:
    confusion: np.ndarray  # rows true, cols predicted
    ppv: np.ndarray
    tpr: np.ndarray
    f1: np.ndarray

    def macro_f1(self, supported_only: bool = True) -> float:
        support = self.confusion.sum(axis=1)
        mask = support > 0 if supported_only else np.ones_like(support, bool)
        return float(self.f1[mask].mean()) if mask.any() else 0.0


def metrics_from_confusion(confusion: np.ndarray) -> ClassMetrics:
    confusion = np.asarray(confusion, dtype=np.int64)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        ppv = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        tpr = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(ppv + tpr > 0, 2 * ppv * tpr / (ppv + tpr), 0.0)
    return ClassMetrics(confusion, ppv, tpr, f1)


def evaluate(model: SequenceClassifier,
             eval_set: Sequence[FcmSequence],
             classes: int = N_LAND_USE, batch: int = 32) -> ClassMetrics:
    if not eval_set:
        raise EmptySplitError("evaluation split is empty")
    confusion = np.zeros((classes, classes), dtype=np.int64)
    for start in range(0, len(eval_set), batch):
        chunk = eval_set[start:start + batch]
        x, y = _batchify(chunk)
        pred = model.logits(Tensor(x)).data.argmax(axis=1)
        for t, p in zip(y, pred):
            confusion[t, p] += 1
    return metrics_from_confusion(confusion)


def metrics_to_json(metrics: ClassMetrics) -> str:
    doc = {
        "confusion": metrics.confusion.tolist(),
        "classes": [
            {
                "id": i + 1,
                "name": LAND_USE_NAMES[i] if i < len(LAND_USE_NAMES) else "",
                "ppv": float(metrics.ppv[i]),
                "tpr": float(metrics.tpr[i]),
                "f1": float(metrics.f1[i]),
            }
            for i in range(metrics.confusion.shape[0])
        ],
        "macro_f1": metrics.macro_f1(),
    }
    return json.dumps(doc, sort_keys=True, indent=2)


_SCENARIO_TITLES = {
    "same_device": "Train/eval, one device per class",
    "cross_device": "Evaluation on unused devices",
    "all_devices": "Train/eval on all devices",
}


def render_metrics_table(scenarios: Dict[str, ClassMetrics]) -> str:
    """Aligned text table: one PPV/TPR/F1 block per evaluation scenario,
    values rounded to two decimals."""
    keys = [k for k in _SCENARIO_TITLES if k in scenarios]
    keys += [k for k in scenarios if k not in _SCENARIO_TITLES]
    n = max(m.confusion.shape[0] for m in scenarios.values())
    name_w = max(len(f"{i + 1}. {LAND_USE_NAMES[i]}")
                 for i in range(min(n, len(LAND_USE_NAMES))))
    lines = []
    header1 = " " * name_w
    header2 = "class".ljust(name_w)
    for key in keys:
        title = _SCENARIO_TITLES.get(key, key)
        header1 += " | " + title.center(20)
        header2 += " | " + "  PPV   TPR    F1".center(20)
    lines.append(header1)
    lines.append(header2)
    lines.append("-" * len(header2))
    for i in range(n):
        name = (f"{i + 1}. {LAND_USE_NAMES[i]}"
                if i < len(LAND_USE_NAMES) else f"{i + 1}.")
        row = name.ljust(name_w)
        for key in keys:
            m = scenarios[key]
            row += " | " + (f"{m.ppv[i]:5.2f} {m.tpr[i]:5.2f} "
                            f"{m.f1[i]:5.2f}").center(20)
        lines.append(row)
    return "\n".join(lines) + "\n"
