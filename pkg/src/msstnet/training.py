"""Synthetic temporal-order clips, cross-entropy SGD training and evaluation."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from . import numerics as nx
from .metrics import ConfusionMatrix, confusion, uar, war
from .model import ModelConfig, MSSTNet
from .numerics import Rng

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 40
    base_lr: float = 0.1
    decay_epochs: tuple[int, ...] = (20, 35)
    decay_factor: float = 10.0
    batch_size: int = 8
    momentum: float = 0.9
    weight_decay: float = 5e-4
    clip_norm: float | None = None  # global gradient-norm cap; None disables

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.base_lr < 0 or self.decay_factor <= 0:
            raise ValueError("base_lr must be >= 0 and decay_factor > 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive (or None)")
        d = list(self.decay_epochs)
        if any(b <= a for a, b in zip(d, d[1:])) or any(e <= 0 or e >= self.epochs for e in d):
            raise ValueError(f"decay epochs {d} must be strictly increasing and inside 1..{self.epochs - 1}")

    def truncated(self, epochs: int) -> "TrainSchedule":
        """Same schedule cut to ``epochs``, dropping decays it never reaches."""
        return replace(self, epochs=epochs, decay_epochs=tuple(e for e in self.decay_epochs if e < epochs))


def lr_at(epoch: int, sched: TrainSchedule) -> float:
    """Piecewise-constant rate: divide by ``decay_factor`` at each decay epoch."""
    if not 0 <= epoch < sched.epochs:
        raise ValueError(f"epoch {epoch} outside 0..{sched.epochs - 1}")
    n = sum(1 for d in sched.decay_epochs if epoch >= d)
    return sched.base_lr / sched.decay_factor**n


def cross_entropy(logits, label) -> nx.Tensor:
    return nx.cross_entropy(logits if isinstance(logits, nx.Tensor) else nx.Tensor(logits), label)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass
class ClipBatch:
    clips: np.ndarray  # (B, T, 3, H, W) in [0, 1]
    labels: np.ndarray  # (B,) int
    ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "ClipBatch":
        idx = np.asarray(idx)
        return ClipBatch(self.clips[idx], self.labels[idx], [self.ids[i] for i in idx] if self.ids else [])


@dataclass
class SyntheticDataset:
    train: ClipBatch
    val: ClipBatch
    orders: list[tuple[int, ...]]


def class_orders(num_classes: int, frames: int) -> list[tuple[int, ...]]:
    """Frame orderings of the canonical trajectory, one per class.

    Classes come in (order, reversed order) pairs: identity and its reverse,
    then ``(0, T-1, ..., 1)`` and its reverse, then lexicographic fill.
    """
    ident = tuple(range(frames))
    mirror = (0,) + tuple(range(frames - 1, 0, -1))
    seeds = itertools.chain([ident, mirror], itertools.permutations(range(frames)))
    orders: list[tuple[int, ...]] = []
    for perm in seeds:
        for o in (perm, perm[::-1]):
            if o not in orders and len(orders) < num_classes:
                orders.append(o)
        if len(orders) == num_classes:
            return orders
    raise ValueError(f"{frames} frames admit fewer than {num_classes} distinct orderings")


def region_levels(frames: int) -> np.ndarray:
    """Canonical ``(T, 2)`` activation levels of regions A and B in [0, 1].

    The pair walks three edges of the unit square, one region changing at a
    time: A brightens, then B darkens, then A fades back.
    """
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    u = np.linspace(0.0, 3.0, frames)
    seg = np.minimum(u.astype(int), 2)
    frac = (u - seg)[:, None]
    return corners[seg] * (1 - frac) + corners[seg + 1] * frac


_REGIONS = (
    # (centre row, centre col, half-size, channel weights) on a 32x32 canvas,
    # scaled to other sizes; each region fills one 8x8 patch before jitter.
    ((12, 12), 4, np.array([1.0, 1.0, 1.0])),  # A brightens
    ((20, 20), 4, np.array([-1.0, -1.0, -1.0])),  # B dims
)


AMP_RANGE = (0.7, 1.0)
FRAME_NOISE = 0.01
BASE_NOISE = 0.02


def _base_face(h: int, w: int, rng: Rng) -> np.ndarray:
    """Fixed face template (skin ellipse on a dark background) plus static texture noise."""
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w])[:, None, None]
    face = ((yy - 0.5) / 0.42) ** 2 + ((xx - 0.5) / 0.34) ** 2 < 1.0
    skin = np.array([0.55, 0.42, 0.35])
    bg = np.array([0.15, 0.15, 0.2])
    img = np.where(face[None], skin[:, None, None], bg[:, None, None])
    return img + BASE_NOISE * rng.normal((3, h, w))


def render_clip(levels: np.ndarray, base: np.ndarray, amp: float, jitter: tuple[int, int], noise: np.ndarray) -> np.ndarray:
    """Draw one clip: static base plus the two regions at ``levels[t]``."""
    t = levels.shape[0]
    _, h, w = base.shape
    clip = np.repeat(base[None], t, axis=0)
    sy, sx = h / 32.0, w / 32.0
    for r, ((cy, cx), half, color) in enumerate(_REGIONS):
        hy, hx = max(1, round(half * sy)), max(1, round(half * sx))
        y0 = int(round(cy * sy)) + jitter[0] - hy
        x0 = int(round(cx * sx)) + jitter[1] - hx
        ys = slice(max(0, y0), min(h, y0 + 2 * hy))
        xs = slice(max(0, x0), min(w, x0 + 2 * hx))
        clip[:, :, ys, xs] += amp * levels[:, r, None, None, None] * color[None, :, None, None]
    return np.clip(clip + noise, 0.0, 1.0)


def make_synthetic_dataset(n_clips: int, config: ModelConfig, seed: int, val_fraction: float = 0.2) -> SyntheticDataset:
    """Balanced clips whose label is the temporal order of the region changes.

    Every class shows the same multiset of frames, only reordered, so a model
    blind to frame order cannot beat chance. Class ``2k + 1`` is class ``2k``
    played backwards.
    """
    c, t = config.C, config.T
    if n_clips < 2 * c:
        raise ValueError(f"need at least {2 * c} clips for {c} classes, got {n_clips}")
    h, w = config.backbone.input_size
    orders = class_orders(c, t)
    canon = region_levels(t)
    rng = Rng(seed).child("synthetic")
    labels = np.arange(n_clips) % c
    clips = np.empty((n_clips, t, 3, h, w))
    for i in range(n_clips):
        r = rng.child(f"clip{i}")
        base = _base_face(h, w, r)
        amp = float(r.uniform(None, AMP_RANGE[0], AMP_RANGE[1]))
        jitter = tuple(int(v) for v in r.integers(-1, 2, 2))
        noise = FRAME_NOISE * r.normal((t, 3, h, w))
        clips[i] = render_clip(canon[list(orders[labels[i]])], base, amp, jitter, noise)
    ids = [f"clip{i:05d}" for i in range(n_clips)]
    # stratified split keeps validation balanced
    split = Rng(seed).child("split")
    val_idx, train_idx = [], []
    for k in range(c):
        members = np.flatnonzero(labels == k)
        members = members[split.permutation(len(members))]
        n_val = max(1, int(round(val_fraction * len(members))))
        val_idx.extend(members[:n_val].tolist())
        train_idx.extend(members[n_val:].tolist())
    full = ClipBatch(clips, labels, ids)
    return SyntheticDataset(full.subset(sorted(train_idx)), full.subset(sorted(val_idx)), orders)


def shuffle_frames(batch: ClipBatch, seed: int) -> ClipBatch:
    """Independently permute the frames of every clip."""
    rng = Rng(seed).child("shuffle")
    t = batch.clips.shape[1]
    out = np.empty_like(batch.clips)
    for i in range(len(batch)):
        out[i] = batch.clips[i, rng.permutation(t)]
    return ClipBatch(out, batch.labels.copy(), list(batch.ids))


# ---------------------------------------------------------------------------
# on-disk dataset
# ---------------------------------------------------------------------------


def save_split(batch: ClipBatch, directory: str | os.PathLike) -> None:
    """Write ``manifest.csv`` (clip_id,label,file) plus one tensor file per clip."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "manifest.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["clip_id", "label", "file"])
        for cid, lab, clip in zip(batch.ids, batch.labels, batch.clips):
            fname = f"{cid}.bin"
            checkpoint.save(d / fname, {"clip": clip})
            wr.writerow([cid, int(lab), fname])


def load_split(directory: str | os.PathLike) -> ClipBatch:
    d = Path(directory)
    manifest = d / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.csv in {d}")
    ids, labels, clips = [], [], []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["clip_id"])
            labels.append(int(row["label"]))
            clips.append(checkpoint.load(d / row["file"])["clip"])
    if not clips:
        return ClipBatch(np.zeros((0,)), np.zeros(0, dtype=np.int64), [])
    return ClipBatch(np.stack(clips), np.asarray(labels, dtype=np.int64), ids)


def save_dataset(ds: SyntheticDataset, root: str | os.PathLike) -> None:
    save_split(ds.train, Path(root) / "train")
    save_split(ds.val, Path(root) / "val")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_war: float
    val_uar: float

    def row(self) -> list[str]:
        return [
            str(self.epoch),
            f"{self.lr:.6g}",
            f"{self.train_loss:.6f}",
            f"{self.train_acc:.4f}",
            f"{self.val_war:.4f}",
            f"{self.val_uar:.4f}",
        ]


LOG_HEADER = ["epoch", "lr", "train_loss", "train_acc", "val_war", "val_uar"]


def write_log(rows: list[EpochLog], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(LOG_HEADER)
        for r in rows:
            wr.writerow(r.row())


def read_log(path: str | os.PathLike) -> list[EpochLog]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != LOG_HEADER:
            raise ValueError(f"{path}: not a training log")
        return [
            EpochLog(int(r["epoch"]), *(float(r[k]) for k in LOG_HEADER[1:]))
            for r in rd
        ]


def predict(model: MSSTNet, clips: np.ndarray, batch_size: int = 16, strict: bool = False) -> np.ndarray:
    """Arg-max class per clip; batches are independent so composition is irrelevant.

    With ``strict``, non-finite logits raise :class:`TrainingDiverged`.
    """
    preds = []
    with nx.no_grad(), np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, len(clips), batch_size):
            logits, _ = model.forward(clips[start : start + batch_size])
            if strict and not np.isfinite(logits.data).all():
                raise TrainingDiverged("non-finite logits during evaluation")
            preds.append(np.argmax(logits.data, axis=-1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(model: MSSTNet, batch: ClipBatch, strict: bool = False) -> tuple[ConfusionMatrix, np.ndarray]:
    preds = predict(model, batch.clips, strict=strict)
    return confusion(preds, batch.labels, model.config.C), preds


@dataclass
class TrainResult:
    log: list[EpochLog]
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_val_war: float


def epoch_order(labels: np.ndarray, rng: Rng) -> np.ndarray:
    """Shuffled visiting order that deals classes round-robin.

    Each class's clips are shuffled, then taken one per class in turn (class
    order reshuffled every round), so consecutive batches stay close to
    class-balanced.
    """
    labels = np.asarray(labels)
    pools = [np.flatnonzero(labels == k) for k in np.unique(labels)]
    pools = [p[rng.permutation(len(p))] for p in pools]
    out = []
    for i in range(max(len(p) for p in pools)):
        for k in rng.permutation(len(pools)):
            if i < len(pools[k]):
                out.append(pools[k][i])
    return np.asarray(out, dtype=np.int64)


GRAD_SHARD = 2  # clips per gradient shard; fixed so results never depend on --workers


def _shard_grad(model: MSSTNet, params: list[nx.Tensor], clips: np.ndarray, labels: np.ndarray, scale: float):
    logits, _ = model.forward(clips)
    loss = nx.scale(nx.cross_entropy(logits, labels), scale)
    hits = int((np.argmax(logits.data, axis=-1) == labels).sum())
    return loss.item(), hits, nx.grad(loss, params)


def batch_gradient(
    model: MSSTNet,
    params: list[nx.Tensor],
    clips: np.ndarray,
    labels: np.ndarray,
    pool: ThreadPoolExecutor | None = None,
) -> tuple[float, int, list[np.ndarray]]:
    """Mean cross-entropy over the batch, correct count and parameter gradients.

    The batch is cut into fixed shards whose gradients are summed in shard
    order, so the result is bitwise identical for any number of workers.
    """
    b = len(labels)
    starts = range(0, b, GRAD_SHARD)
    jobs = [(clips[i : i + GRAD_SHARD], labels[i : i + GRAD_SHARD]) for i in starts]
    run = lambda job: _shard_grad(model, params, job[0], job[1], len(job[1]) / b)  # noqa: E731
    results = list(pool.map(run, jobs)) if pool is not None else [run(j) for j in jobs]
    loss, hits, grads = results[0]
    grads = [g.copy() for g in grads]
    for l_s, h_s, g_s in results[1:]:
        loss += l_s
        hits += h_s
        for acc, g in zip(grads, g_s):
            acc += g
    return loss, hits, grads


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(math.fsum(float(np.vdot(g, g)) for g in grads))
    if total <= max_norm:
        return grads
    k = max_norm / total
    return [g * k for g in grads]


def train(
    model: MSSTNet,
    dataset: SyntheticDataset,
    sched: TrainSchedule = TrainSchedule(),
    seed: int = 0,
    checkpoint_path: str | os.PathLike | None = None,
    log_path: str | os.PathLike | None = None,
    workers: int = 1,
) -> TrainResult:
    """Mini-batch SGD with the piecewise schedule; keeps the best-validation weights."""
    sched.validate()
    if workers < 1:
        raise ValueError("workers must be >= 1")
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        return _train(model, dataset, sched, seed, checkpoint_path, log_path, pool)
    finally:
        if pool is not None:
            pool.shutdown()


def _train(model, dataset, sched, seed, checkpoint_path, log_path, pool) -> TrainResult:
    params = list(model.parameters().values())
    opt = nx.SGD(params, momentum=sched.momentum, weight_decay=sched.weight_decay)
    order_rng = Rng(seed).child("batches")
    train_set = dataset.train
    n = len(train_set)
    if n == 0:
        raise ValueError("empty training split")
    rows: list[EpochLog] = []
    best = (-1.0, -1, model.state_dict())
    for epoch in range(sched.epochs):
        lr = lr_at(epoch, sched)
        perm = epoch_order(train_set.labels, order_rng)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, sched.batch_size):
            idx = perm[start : start + sched.batch_size]
            loss, hits, grads = batch_gradient(model, params, train_set.clips[idx], train_set.labels[idx], pool)
            if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise TrainingDiverged(f"non-finite loss or gradient at epoch {epoch}")
            if sched.clip_norm is not None:
                grads = clip_grad_norm(grads, sched.clip_norm)
            for p, g in zip(params, grads):
                p.grad = g
            opt.step(lr)
            loss_sum += loss * len(idx)
            correct += hits
        if len(dataset.val):
            cm, _ = evaluate(model, dataset.val, strict=True)
            vw, vu = war(cm), uar(cm)
        else:
            vw = vu = float("nan")
        row = EpochLog(epoch, lr, loss_sum / n, 100.0 * correct / n, vw, vu)
        rows.append(row)
        log.info("epoch %d lr %.4g loss %.4f acc %.2f val WAR %.2f UAR %.2f", *[float(x) for x in row.row()])
        score = vw if math.isfinite(vw) else row.train_acc
        if score >= best[0]:  # ties go to the later, longer-trained epoch
            best = (score, epoch, model.state_dict())
        if log_path is not None:
            write_log(rows, log_path)
    if checkpoint_path is not None:
        checkpoint.save(checkpoint_path, best[2])
    return TrainResult(rows, best[2], best[1], best[0])
