"""Determinant-regression datasets.

Each sample is an ``n x n`` matrix with i.i.d. entries uniform on
``[low, high)``; its rows are the ``n`` points in ``R^n`` and its label is
the determinant, which flips sign under any odd row relabelling.

Binary layout (little-endian)::

    magic   8 bytes   b"ASYMDS\\0\\1"
    u16     version
    u32     n
    u64 x3  train, val, test counts
    u64     seed
    f64 x2  low, high
    f64 *   samples, row-major (N, n, n)
    f64 *   labels (N,)
    u32     CRC-32 of everything above

Splits are contiguous in the order train, val, test.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._binio import FormatError, Reader, le_doubles, strip_crc, with_crc

SPLITS = ("train", "val", "test")
FULL_COUNTS = (110_000, 15_000, 20_000)
DESK_COUNTS = (20_000, 2_000, 4_000)

_MAGIC = b"ASYMDS\x00\x01"
_VERSION = 1
_HEADER = "<HIQQQQdd"
_BLOCK = 4096


@dataclass(eq=False)
class Dataset:
    n: int
    counts: tuple[int, int, int]
    samples: np.ndarray
    labels: np.ndarray
    seed: int
    low: float = 0.0
    high: float = 1.1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = tuple(int(c) for c in self.counts)
        total = sum(self.counts)
        if self.samples.shape != (total, self.n, self.n) or self.labels.shape != (total,):
            raise ValueError("sample/label arrays do not match n and counts")

    @property
    def total(self) -> int:
        return sum(self.counts)

    def bounds(self, split: str) -> tuple[int, int]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}; choose from {', '.join(SPLITS)}")
        k = SPLITS.index(split)
        start = sum(self.counts[:k])
        return start, start + self.counts[k]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.bounds(name)
        return self.samples[lo:hi], self.labels[lo:hi]


def det_label(a) -> float | np.ndarray:
    """Determinant by LU with partial pivoting; accepts ``(n, n)`` or ``(..., n, n)``.

    The result is the product of the pivots times the sign of the row
    interchanges. An exactly zero pivot column gives 0.
    """
    u = np.array(a, dtype=np.float64)
    if u.ndim < 2 or u.shape[-1] != u.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("matrix has non-finite entries")
    single = u.ndim == 2
    n = u.shape[-1]
    u = u.reshape(-1, n, n)
    batch = np.arange(u.shape[0])
    sign = np.ones(u.shape[0])
    det = np.ones(u.shape[0])
    for k in range(n):
        p = k + np.argmax(np.abs(u[:, k:, k]), axis=1)
        swap = p != k
        if swap.any():
            rows_k = u[batch, k].copy()
            u[batch, k] = u[batch, p]
            u[batch, p] = rows_k
            sign[swap] = -sign[swap]
        piv = u[:, k, k]
        det *= piv
        if k + 1 < n:
            safe = np.where(piv == 0, 1.0, piv)
            l = u[:, k + 1:, k] / safe[:, None]
            u[:, k + 1:, k:] -= l[:, :, None] * u[:, None, k, k:]
    out = sign * det
    out[out == 0] = 0.0
    return float(out[0]) if single else out.reshape(np.shape(a)[:-2])


def gen_dataset(n: int, counts=DESK_COUNTS, seed: int = 0, low: float = 0.0, high: float = 1.1) -> Dataset:
    """Sample uniform matrices and label them with their determinants.

    Blocks of 4096 samples draw from independent streams keyed by
    ``(seed, block)``, so any block can be regenerated on its own.
    """
    n = int(n)
    counts = tuple(int(c) for c in counts)
    if n < 2:
        raise ValueError(f"matrix order must be at least 2, got {n}")
    if len(counts) != 3 or min(counts) < 1:
        raise ValueError(f"need three positive split counts, got {counts}")
    if not high > low:
        raise ValueError("empty sampling interval")
    total = sum(counts)
    samples = np.empty((total, n, n))
    top = np.nextafter(high, low)
    for block, start in enumerate(range(0, total, _BLOCK)):
        stop = min(start + _BLOCK, total)
        rng = np.random.default_rng([int(seed), block])
        vals = rng.uniform(low, high, size=(stop - start, n, n))
        samples[start:stop] = np.minimum(vals, top)
    labels = np.empty(total)
    for start in range(0, total, _BLOCK):
        labels[start:start + _BLOCK] = det_label(samples[start:start + _BLOCK])
    return Dataset(n, counts, samples, labels, int(seed), float(low), float(high))


def dataset_to_bytes(ds: Dataset) -> bytes:
    header = _MAGIC + struct.pack(_HEADER, _VERSION, ds.n, *ds.counts, ds.seed, ds.low, ds.high)
    return with_crc(header + le_doubles(ds.samples) + le_doubles(ds.labels))


def dataset_from_bytes(buf: bytes) -> Dataset:
    what = "dataset"
    if len(buf) < len(_MAGIC) + 4:
        raise FormatError(f"{what}: file too short ({len(buf)} bytes)")
    if buf[:len(_MAGIC)] != _MAGIC:
        raise FormatError(f"{what}: bad magic {bytes(buf[:len(_MAGIC)])!r}")
    r = Reader(strip_crc(buf, what), what)
    r.expect_magic(_MAGIC)
    version, n, ntr, nva, nte, seed, low, high = r.unpack(_HEADER)
    if version != _VERSION:
        raise FormatError(f"{what}: unsupported version {version}")
    total = ntr + nva + nte
    samples = r.doubles(total * n * n).reshape(total, n, n)
    labels = r.doubles(total)
    r.done()
    return Dataset(n, (ntr, nva, nte), samples, labels, seed, low, high)


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


def export_csv(ds: Dataset, path) -> None:
    """One row per sample: the n^2 entries row-major, then the label.

    Rows follow the train, val, test order; ``ds.bounds`` gives the split offsets.
    """
    n = ds.n
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"a{i}_{j}" for i in range(n) for j in range(n)] + ["label"])
        for x, y in zip(ds.samples, ds.labels):
            w.writerow([repr(float(v)) for v in x.ravel()] + [repr(float(y))])
