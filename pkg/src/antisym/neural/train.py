"""Minibatch Adam on the mean absolute error, with a plateau scheduler."""
from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data import Dataset
from .optim import AdamState, PlateauScheduler, adam_step

log = logging.getLogger(__name__)

MARE_LABEL_FLOOR = 1e-12
LOG_COLUMNS = ("epoch", "train_mae", "val_mae", "lr", "wall_seconds")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-3
    factor: float = 0.5
    patience: int = 5
    min_lr: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        if not 0 <= self.min_lr <= self.lr:
            raise ValueError("min_lr must lie in [0, lr]")


@dataclass
class EpochLog:
    epoch: int
    train_mae: float
    val_mae: float
    lr: float
    wall_seconds: float


@dataclass
class TrainResult:
    model: object
    history: list[EpochLog] = field(default_factory=list)

    def write_csv(self, path) -> None:
        write_log_csv(self.history, path)


def write_log_csv(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in history:
            w.writerow([row.epoch, repr(row.train_mae), repr(row.val_mae), repr(row.lr),
                        f"{row.wall_seconds:.3f}"])


def _take(feats, idx):
    return tuple(f[idx] for f in feats)


def _slice(feats, lo, hi):
    return tuple(f[lo:hi] for f in feats)


def predict_features(model, feats, chunk: int = 4096) -> np.ndarray:
    total = feats[0].shape[0]
    out = np.empty(total)
    for lo in range(0, total, chunk):
        out[lo:lo + chunk] = model.forward(_slice(feats, lo, lo + chunk))[0]
    return out


def split_features(model, data: Dataset, split: str, cache_dir=None):
    """Frozen features of one split, optionally cached as ``.npz`` under ``cache_dir``."""
    x, _ = data.split(split)
    if cache_dir is None:
        return model.featurize(x)
    digest = hashlib.sha256(np.ascontiguousarray(x).tobytes())
    digest.update(model.feature_key().encode())
    key = digest.hexdigest()[:20]
    path = Path(cache_dir) / f"features-{model.tag}-{key}-{split}.npz"
    if path.exists():
        with np.load(path) as z:
            return tuple(z[f"f{i}"] for i in range(len(z.files)))
    feats = model.featurize(x)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{f"f{i}": f for i, f in enumerate(feats)})
    return feats


def train(model, data: Dataset, cfg: TrainConfig, *, cache_dir=None, on_epoch=None) -> TrainResult:
    """Fit ``model`` in place on the train split, scheduling on validation MAE.

    Raises :class:`DivergenceError` if either loss becomes non-finite.
    """
    if data.counts[0] < 1 or data.counts[1] < 1:
        raise ValueError("training needs non-empty train and val splits")
    if (model.n, model.d) != (data.n, data.n):
        raise ValueError(f"model expects ({model.n}, {model.d}) clouds, data has order {data.n}")
    train_feats = split_features(model, data, "train", cache_dir)
    val_feats = split_features(model, data, "val", cache_dir)
    y_train = data.split("train")[1]
    y_val = data.split("val")[1]

    params = model.params()
    state = AdamState.zeros_like(params)
    sched = PlateauScheduler(cfg.lr, cfg.factor, cfg.patience, cfg.min_lr)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model)
    total = y_train.shape[0]
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        lr = sched.lr
        order = rng.permutation(total)
        loss_sum = 0.0
        for lo in range(0, total, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            try:
                pred, cache = model.forward(_take(train_feats, idx))
            except FloatingPointError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}") from exc
            with np.errstate(over="ignore", invalid="ignore"):  # non-finite loss raises below
                resid = pred - y_train[idx]
                loss_sum += np.abs(resid).sum()
            grads = model.backward(cache, np.sign(resid) / idx.shape[0])
            adam_step(params, grads, state, lr)
        train_mae = loss_sum / total
        try:
            val_mae = float(np.abs(predict_features(model, val_feats) - y_val).mean())
        except FloatingPointError as exc:
            raise DivergenceError(f"epoch {epoch}: {exc}") from exc
        if not (np.isfinite(train_mae) and np.isfinite(val_mae)):
            raise DivergenceError(f"epoch {epoch}: train MAE {train_mae}, val MAE {val_mae}")
        sched.step(val_mae)
        row = EpochLog(epoch, float(train_mae), val_mae, lr, time.perf_counter() - t0)
        result.history.append(row)
        log.info("epoch %d train_mae %.6g val_mae %.6g lr %.3g", epoch, train_mae, val_mae, lr)
        if on_epoch is not None:
            on_epoch(row)
    return result


def evaluate(model, data: Dataset, split: str, *, feats=None) -> dict:
    """MAE and MARE on one split; MARE skips labels with ``|label| < 1e-12``."""
    x, y = data.split(split)
    if y.shape[0] == 0:
        raise ValueError(f"split {split!r} is empty")
    pred = predict_features(model, feats if feats is not None else model.featurize(x))
    return error_metrics(pred, y)


def error_metrics(pred, labels) -> dict:
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("no samples to evaluate")
    err = np.abs(pred - labels)
    keep = np.abs(labels) >= MARE_LABEL_FLOOR
    mare = float((err[keep] / np.abs(labels[keep])).mean()) if keep.any() else float("nan")
    return {"mae": float(err.mean()), "mare": mare, "mare_excluded": int((~keep).sum()),
            "count": int(labels.size)}


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
