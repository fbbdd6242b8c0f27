"""Siamese verification: one encoder, Euclidean pair energy, contrastive
training, percent similarity and threshold classification.

Both crops of a pair go through the same EncoderState (shared weights);
the pair energy is the Euclidean distance of the two unit embeddings,
bounded by 2, and similarity maps it onto [0, 100] via 100 * (1 - E/2).
"""
from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import IrisCrop, IrisPair, PairLabel
from .encoder import (
    ArchDescriptor,
    backward,
    forward,
    init_params,
    param_count,
    smallconv_arch,
)
from .errors import DomainError, EmptyDataset, ShapeError, SingleClassError

CHECKPOINT_FORMAT_VERSION = "1"


class Optimizer(str, Enum):
    SGD = "sgd"
    ADAPTIVE = "adaptive"


class Classification(str, Enum):
    REAL_SOURCE = "real_source"
    GAN_SOURCE = "gan_source"


@dataclass(frozen=True, eq=False)
class EncoderState:
    arch: ArchDescriptor
    w: np.ndarray
    embed_dim: int
    input_size: int
    seed: int

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        expected = param_count(self.arch)
        if w.size != expected:
            raise ValueError(f"w has {w.size} params, arch needs {expected}")
        if self.embed_dim != self.arch.embed_dim or self.input_size != self.arch.input_size:
            raise ValueError("embed_dim/input_size must match the arch descriptor")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.0
    batch_size: int = 32
    learning_rate: float = 1e-3
    epochs: int = 10
    optimizer: Optimizer = Optimizer.ADAPTIVE

    def __post_init__(self):
        if not 0.0 < self.margin <= 2.0:
            raise ValueError("margin must lie in (0, 2]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("bad batch_size/epochs")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    accuracy: float
    threshold: float


@dataclass(frozen=True)
class EvalReport:
    model_name: str
    train_params: int
    train_loss: float
    train_accuracy: float
    compute_minutes: float
    test_loss: float
    test_accuracy: float
    mean_similarity: float

    def __post_init__(self):
        for name, v in (("train_accuracy", self.train_accuracy), ("test_accuracy", self.test_accuracy)):
            if np.isfinite(v) and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        if np.isfinite(self.mean_similarity) and not 0.0 <= self.mean_similarity <= 100.0:
            raise ValueError(f"mean_similarity {self.mean_similarity} outside [0, 100]")

    def to_json(self) -> dict:
        return {
            "model_name": self.model_name,
            "train_params": self.train_params,
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "compute_minutes": self.compute_minutes,
            "test_loss": self.test_loss,
            "test_accuracy": self.test_accuracy,
            "mean_similarity": self.mean_similarity,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        return cls(
            model_name=str(d["model_name"]),
            train_params=int(d["train_params"]),
            train_loss=float(d["train_loss"]),
            train_accuracy=float(d["train_accuracy"]),
            compute_minutes=float(d["compute_minutes"]),
            test_loss=float(d["test_loss"]),
            test_accuracy=float(d["test_accuracy"]),
            mean_similarity=float(d["mean_similarity"]),
        )


def init_encoder(arch: ArchDescriptor, seed: int) -> EncoderState:
    w = init_params(arch, seed)
    return EncoderState(
        arch=arch, w=w, embed_dim=arch.embed_dim, input_size=arch.input_size, seed=seed
    )


def _crop_tensor(crop: IrisCrop) -> np.ndarray:
    img = crop.image
    if img.channels == 1:
        return img.data[None, :, :]
    return img.data.transpose(2, 0, 1)


def _stack_crops(crops: list[IrisCrop]) -> np.ndarray:
    return np.stack([_crop_tensor(c) for c in crops])


def encode(state: EncoderState, crop: IrisCrop) -> np.ndarray:
    """Unit-norm embedding of one crop; deterministic in (w, crop)."""
    if crop.crop_size != state.input_size:
        raise ShapeError(
            f"crop size {crop.crop_size} does not match encoder input {state.input_size}"
        )
    if crop.image.channels != state.arch.in_channels:
        raise ShapeError(
            f"crop has {crop.image.channels} channels, encoder expects {state.arch.in_channels}"
        )
    e, _ = forward(state.arch, state.w, _crop_tensor(crop)[None])
    return e[0]


def pair_distance(e1: np.ndarray, e2: np.ndarray) -> float:
    """Euclidean energy E = ||e1 - e2||; in [0, 2] for unit embeddings."""
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise ShapeError(f"embedding shapes differ: {e1.shape} vs {e2.shape}")
    return float(np.linalg.norm(e1 - e2))


def similarity_percent(E: float) -> float:
    """Monotone map of the pair energy onto [0, 100]: s = 100 * (1 - E/2)."""
    if E < -1e-6 or E > 2.0 + 1e-6:
        raise DomainError(f"energy {E} outside [0, 2]")
    E = min(max(E, 0.0), 2.0)
    return 100.0 * (1.0 - E / 2.0)


def contrastive_loss(E: float, y: PairLabel, cfg: LossConfig) -> float:
    """y*E^2 + (1-y)*max(0, m-E)^2."""
    if E < 0:
        raise DomainError(f"energy {E} must be nonnegative")
    if y.y == 1:
        return E * E
    slack = max(0.0, cfg.margin - E)
    return slack * slack


def _pair_embedding_grads(eL, eR, ys, margin):
    """dLoss/d(embedding) for a batch; loss averaged over the batch.

    y=1 pulls (d/dE of E^2), y=0 pushes while E < margin; the zero
    subgradient is used at E == margin and at E == 0.
    """
    d = eL - eR
    E = np.linalg.norm(d, axis=1)
    n = d.shape[0]
    coef = np.zeros(n)
    pos = ys == 1
    coef[pos] = 2.0
    neg_active = (~pos) & (E < margin) & (E > 0.0)
    coef[neg_active] = -2.0 * (margin - E[neg_active]) / E[neg_active]
    deL = (coef[:, None] * d) / n
    losses = np.where(pos, E**2, np.maximum(0.0, margin - E) ** 2)
    return deL, -deL, losses, E


def loss_gradient(state: EncoderState, pair: IrisPair, y: PairLabel, cfg: LossConfig) -> np.ndarray:
    """Gradient of the pair's contrastive loss with respect to the flat w."""
    xL = _crop_tensor(pair.left)[None]
    xR = _crop_tensor(pair.right)[None]
    eL, cacheL = forward(state.arch, state.w, xL)
    eR, cacheR = forward(state.arch, state.w, xR)
    deL, deR, _, _ = _pair_embedding_grads(eL, eR, np.array([y.y]), cfg.margin)
    gL = backward(state.arch, state.w, cacheL, deL)
    gR = backward(state.arch, state.w, cacheR, deR)
    return gL + gR


def _check_both_labels(labels) -> None:
    ys = {l.y for l in labels}
    if ys != {0, 1}:
        raise SingleClassError(f"need both labels, got {sorted(ys)}")


def best_threshold(similarities, labels) -> tuple[float, float]:
    """(threshold, accuracy) maximizing accuracy of "similarity >= tau => REAL".

    Accuracy is piecewise constant between distinct similarity values;
    ties pick the longest run of equal-accuracy cuts (first on a tie)
    and return the midpoint of that interval.
    """
    sims = np.asarray(similarities, dtype=np.float64)
    ys = np.asarray(labels, dtype=np.int64)
    order = np.argsort(sims, kind="stable")
    sims_s = sims[order]
    ys_s = ys[order]
    vals, starts = np.unique(sims_s, return_index=True)
    k = vals.size
    n = sims.size
    # cut c: values with index < boundary(c) are classified GAN
    boundaries = np.concatenate([starts, [n]])
    ones_prefix = np.concatenate([[0], np.cumsum(ys_s)])
    total_ones = ones_prefix[-1]
    accs = np.empty(k + 1)
    for c in range(k + 1):
        b = boundaries[c]
        gan_correct = b - ones_prefix[b]
        real_correct = total_ones - ones_prefix[b]
        accs[c] = (gan_correct + real_correct) / n
    best = accs.max()
    is_best = accs == best
    # longest consecutive run of best cuts; first one wins ties
    run_start, run_len, best_start, best_len = 0, 0, 0, 0
    for c in range(k + 2):
        if c <= k and is_best[c]:
            if run_len == 0:
                run_start = c
            run_len += 1
            if run_len > best_len:
                best_len, best_start = run_len, run_start
        else:
            run_len = 0
    lo_cut, hi_cut = best_start, best_start + best_len - 1
    lo = 0.0 if lo_cut == 0 else float(vals[lo_cut - 1])
    hi = 100.0 if hi_cut == k else float(vals[hi_cut])
    return (lo + hi) / 2.0, float(best)


def select_threshold(state: EncoderState, validation) -> float:
    """Similarity threshold maximizing accuracy on a labeled validation set."""
    _check_both_labels([y for _, y in validation])
    sims, ys = [], []
    for pair, y in validation:
        E = pair_distance(encode(state, pair.left), encode(state, pair.right))
        sims.append(similarity_percent(E))
        ys.append(y.y)
    tau, _ = best_threshold(sims, ys)
    return tau


def classify_pair(state: EncoderState, pair: IrisPair, tau: float) -> Classification:
    E = pair_distance(encode(state, pair.left), encode(state, pair.right))
    if similarity_percent(E) >= tau:
        return Classification.REAL_SOURCE
    return Classification.GAN_SOURCE


def _adam_step(w, grad, mom, vel, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    mom *= beta1
    mom += (1.0 - beta1) * grad
    vel *= beta2
    vel += (1.0 - beta2) * grad * grad
    mhat = mom / (1.0 - beta1**t)
    vhat = vel / (1.0 - beta2**t)
    w -= lr * mhat / (np.sqrt(vhat) + eps)


def train(pairs, cfg: LossConfig, seed: int, arch: ArchDescriptor | None = None):
    """Mini-batch gradient descent on the contrastive loss.

    Deterministic given (pairs, cfg, seed): fixed init, fixed shuffle
    order, single worker.  Returns (EncoderState, [EpochStats...]); the
    per-epoch accuracy is measured at the best threshold over the
    similarities seen during that epoch.
    """
    labels = [y for _, y in pairs]
    _check_both_labels(labels)
    size = pairs[0][0].left.crop_size
    channels = pairs[0][0].left.image.channels
    if arch is None:
        arch = smallconv_arch(size, in_channels=channels)
    state = init_encoder(arch, seed)
    if cfg.epochs == 0:
        return state, []

    xL = _stack_crops([p.left for p, _ in pairs])
    xR = _stack_crops([p.right for p, _ in pairs])
    ys = np.array([y.y for _, y in pairs], dtype=np.int64)
    n = len(pairs)

    w = state.w.copy()
    mom = np.zeros_like(w)
    vel = np.zeros_like(w)
    step = 0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5317]))
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        losses = []
        sims: list[float] = []
        lbls: list[int] = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            eL, cacheL = forward(arch, w, xL[idx])
            eR, cacheR = forward(arch, w, xR[idx])
            deL, deR, batch_losses, E = _pair_embedding_grads(eL, eR, ys[idx], cfg.margin)
            grad = backward(arch, w, cacheL, deL) + backward(arch, w, cacheR, deR)
            step += 1
            if cfg.optimizer is Optimizer.ADAPTIVE:
                _adam_step(w, grad, mom, vel, step, cfg.learning_rate)
            else:
                w -= cfg.learning_rate * grad
            losses.extend(batch_losses.tolist())
            sims.extend((100.0 * (1.0 - np.minimum(E, 2.0) / 2.0)).tolist())
            lbls.extend(ys[idx].tolist())
        tau, acc = best_threshold(sims, lbls)
        history.append(
            EpochStats(epoch=epoch, mean_loss=float(np.mean(losses)), accuracy=acc, threshold=tau)
        )
    final = EncoderState(
        arch=arch, w=w, embed_dim=arch.embed_dim, input_size=arch.input_size, seed=seed
    )
    return final, history


def evaluate_dataset(
    state: EncoderState,
    pairs,
    tau: float,
    cfg: LossConfig | None = None,
    model_name: str = "smallconv",
    train_loss: float = float("nan"),
    train_accuracy: float = float("nan"),
    train_minutes: float | None = None,
) -> EvalReport:
    """Metrics row over a labeled pair list at threshold tau.

    compute_minutes is the supplied training wall-clock when given,
    otherwise the wall-clock of this evaluation.
    """
    if not pairs:
        raise EmptyDataset("no pairs to evaluate")
    cfg = cfg or LossConfig()
    t0 = time.perf_counter()
    losses, sims, correct = [], [], 0
    for pair, y in pairs:
        E = pair_distance(encode(state, pair.left), encode(state, pair.right))
        losses.append(contrastive_loss(E, y, cfg))
        s = similarity_percent(E)
        sims.append(s)
        predicted_real = s >= tau
        if predicted_real == (y.y == 1):
            correct += 1
    minutes = (time.perf_counter() - t0) / 60.0 if train_minutes is None else train_minutes
    return EvalReport(
        model_name=model_name,
        train_params=int(state.w.size),
        train_loss=train_loss,
        train_accuracy=train_accuracy,
        compute_minutes=minutes,
        test_loss=float(np.mean(losses)),
        test_accuracy=correct / len(pairs),
        mean_similarity=float(np.mean(sims)),
    )


def save_checkpoint(state: EncoderState, path) -> None:
    """Single-file checkpoint: arch descriptor + flat float64 weights."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": state.arch.to_json(),
        "embed_dim": state.embed_dim,
        "input_size": state.input_size,
        "seed": state.seed,
        "w_dtype": "<f8",
        "w_base64": base64.b64encode(
            np.ascontiguousarray(state.w, dtype="<f8").tobytes()
        ).decode("ascii"),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(path) -> EncoderState:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    arch = ArchDescriptor.from_json(doc["arch"])
    w = np.frombuffer(base64.b64decode(doc["w_base64"]), dtype="<f8").copy()
    return EncoderState(
        arch=arch,
        w=w,
        embed_dim=int(doc["embed_dim"]),
        input_size=int(doc["input_size"]),
        seed=int(doc["seed"]),
    )
