"""Alternating-group invariant feature maps.

``feature_1d`` maps ``x in R^n`` to ``[sort(x); Q(x)]`` where ``Q`` is the
signed minimal gap: the product of ``sign(x_j - x_i)`` over ``i < j`` times
the smallest pairwise distance. ``Q`` is antisymmetric and vanishes exactly on
vectors with a repeated entry, so ``feature_1d`` is invariant under even
permutations and is bi-Lipschitz for ``d_plus`` with constants (1, 2).

For clouds in ``R^d`` each random pair ``(a, b)`` gives the scalar
``psi(x; a, b) = b . feature_1d(a . x_1, ..., a . x_n)`` and
``psi_features`` stacks ``m`` of them (``m = 2nd + 1`` by default).

The Vandermonde features ``prod_{i<j} y . (x_i - x_j)`` are the
antisymmetric baseline; they are homogeneous of degree ``n(n-1)/2``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._binio import FormatError, Reader, le_doubles
from .symmetry import Permutation, as_cloud, table_signs

#: Pair count above which Vandermonde products are accumulated as log-magnitudes.
LOG_PRODUCT_PAIRS = 64


@dataclass(frozen=True)
class SortResult:
    sorted: np.ndarray
    perm: Permutation
    has_ties: bool


def _vector(x, min_len: int = 1) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        v = v.ravel()
    if v.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} entries, got {v.shape[0]}")
    if np.isnan(v).any():
        raise ValueError("input contains NaN")
    return v


def sort_with_perm(x) -> SortResult:
    """Sort ascending and return the (stable) sorting permutation."""
    v = _vector(x)
    order = np.argsort(v, kind="stable")
    s = v[order]
    return SortResult(s, Permutation.from_mapping(order.tolist()), bool(np.any(s[1:] == s[:-1])))


def q_naive(x) -> float:
    """Signed minimal gap straight from the pairwise definition, O(n^2)."""
    v = _vector(x, min_len=2)
    i, j = np.triu_indices(v.shape[0], k=1)
    diff = v[j] - v[i]
    return float(np.prod(np.sign(diff)) * np.abs(diff).min())


def q_fast(x) -> float:
    """Signed minimal gap via one sort: ``sign(tau_x) * min adjacent gap``."""
    v = _vector(x, min_len=2)
    res = sort_with_perm(v)
    if res.has_ties:
        return 0.0
    return float(res.perm.sign * np.diff(res.sorted).min())


def feature_1d(x) -> np.ndarray:
    """``[sort(x); Q(x)]`` as a vector of length ``n + 1``."""
    v = _vector(x, min_len=2)
    res = sort_with_perm(v)
    q = 0.0 if res.has_ties else res.perm.sign * np.diff(res.sorted).min()
    return np.append(res.sorted, q)


def feature_1d_rows(p: np.ndarray) -> np.ndarray:
    """``feature_1d`` applied along the last axis of ``p``, shape ``(..., n + 1)``."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] < 2:
        raise ValueError("feature_1d needs n >= 2")
    order = np.argsort(p, axis=-1, kind="stable")
    s = np.take_along_axis(p, order, axis=-1)
    # a tie makes the min gap exactly 0, which zeroes Q regardless of the sign
    q = table_signs(order) * np.diff(s, axis=-1).min(axis=-1)
    return np.concatenate([s, q[..., None]], axis=-1)


def _project(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    # (..., n, d) x (m, d) -> (..., m, n). Elementwise accumulation over d so a
    # point's projection does not depend on its row position.
    out = x[..., None, :, 0] * a[:, 0, None]
    for k in range(1, a.shape[1]):
        out += x[..., None, :, k] * a[:, k, None]
    return out


def psi(x, a, b) -> float:
    """``b . feature_1d(a . x_1, ..., a . x_n)``."""
    x = as_cloud(x)
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n, d = x.shape
    if a.shape[0] != d:
        raise ValueError(f"direction has length {a.shape[0]}, points live in R^{d}")
    if b.shape[0] != n + 1:
        raise ValueError(f"weights have length {b.shape[0]}, expected n + 1 = {n + 1}")
    return float(feature_1d(_project(x, a[None, :])[0]) @ b)


@dataclass(frozen=True, eq=False)
class ProjectionEnsemble:
    n: int
    d: int
    m: int
    a: np.ndarray
    b: np.ndarray
    seed: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("ensemble needs m >= 1")
        if self.a.shape != (self.m, self.d) or self.b.shape != (self.m, self.n + 1):
            raise ValueError("ensemble arrays do not match (n, d, m)")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("ensemble has non-finite entries")
        if np.any(np.all(self.a == 0, axis=1)):
            raise ValueError("ensemble has a zero direction")
        self.a.flags.writeable = False
        self.b.flags.writeable = False

    def __eq__(self, other):
        if not isinstance(other, ProjectionEnsemble):
            return NotImplemented
        return (self.n, self.d, self.m, self.seed) == (other.n, other.d, other.m, other.seed) \
            and np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)


def default_m(n: int, d: int) -> int:
    return 2 * n * d + 1


def sample_ensemble(n: int, d: int, m: int | None = None, seed: int = 0) -> ProjectionEnsemble:
    """Draw ``a_k`` in ``R^d`` and ``b_k`` in ``R^(n+1)`` i.i.d. standard normal."""
    if n < 2 or d < 1:
        raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    m = default_m(n, d) if m is None else int(m)
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, d))
    b = rng.standard_normal((m, n + 1))
    return ProjectionEnsemble(n, d, m, a, b, int(seed))


def psi_features(x, e: ProjectionEnsemble, chunk: int = 512) -> np.ndarray:
    """Stacked ``psi(x; a_k, b_k)``; ``x`` is ``(n, d)`` or a batch ``(B, n, d)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = as_cloud(x)[None]
    if x.ndim != 3 or x.shape[1:] != (e.n, e.d):
        raise ValueError(f"expected clouds of shape ({e.n}, {e.d}), got {x.shape[-2:]}")
    out = np.empty((x.shape[0], e.m))
    for start in range(0, x.shape[0], chunk):
        f = feature_1d_rows(_project(x[start:start + chunk], e.a))
        acc = f[..., 0] * e.b[:, 0]
        for k in range(1, e.n + 1):
            acc += f[..., k] * e.b[:, k]
        out[start:start + chunk] = acc
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class VandermondeBank:
    n: int
    d: int
    K: int
    y: np.ndarray
    seed: int

    def __post_init__(self):
        if self.K < 1 or self.y.shape != (self.K, self.d):
            raise ValueError("bank arrays do not match (K, d)")
        norms = np.linalg.norm(self.y, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("bank directions must be unit vectors")
        self.y.flags.writeable = False

    def __eq__(self, other):
        if not isinstance(other, VandermondeBank):
            return NotImplemented
        return (self.n, self.d, self.K, self.seed) == (other.n, other.d, other.K, other.seed) \
            and np.array_equal(self.y, other.y)


def sample_vandermonde_bank(n: int, d: int, K: int | None = None, seed: int = 0) -> VandermondeBank:
    """``K`` uniform directions on the unit sphere of ``R^d`` (normalised Gaussians)."""
    if n < 2 or d < 1:
        raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    K = n * d + 1 if K is None else int(K)
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((K, d))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):  # pragma: no cover - probability zero
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return VandermondeBank(n, d, K, g / norms[:, None], int(seed))


def _pair_diffs(p: np.ndarray) -> np.ndarray:
    # p: (..., n) -> (..., n(n-1)/2) of p_i - p_j for i < j
    i, j = np.triu_indices(p.shape[-1], k=1)
    return p[..., i] - p[..., j]


def vandermonde_log(x, y) -> tuple[float, float]:
    """``(sign, log|f_y(x)|)`` of the Vandermonde product; ``(0, -inf)`` on a zero."""
    x = as_cloud(x)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != x.shape[1]:
        raise ValueError(f"direction has length {y.shape[0]}, points live in R^{x.shape[1]}")
    if x.shape[0] < 2:
        raise ValueError("Vandermonde product needs n >= 2")
    diffs = _pair_diffs(_project(x, y[None, :])[0])
    if np.any(diffs == 0):
        return 0.0, -math.inf
    sign = -1.0 if np.count_nonzero(diffs < 0) & 1 else 1.0
    return sign, math.fsum(np.log(np.abs(diffs)).tolist())


def vandermonde_feature(x, y) -> float:
    """``prod_{i<j} y . (x_i - x_j)``."""
    x = as_cloud(x)
    n = x.shape[0]
    if n * (n - 1) // 2 > LOG_PRODUCT_PAIRS:
        sign, logabs = vandermonde_log(x, y)
        return sign * math.exp(logabs) if sign else 0.0
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != x.shape[1]:
        raise ValueError(f"direction has length {y.shape[0]}, points live in R^{x.shape[1]}")
    if n < 2:
        raise ValueError("Vandermonde product needs n >= 2")
    return float(np.prod(_pair_diffs(_project(x, y[None, :])[0])))


def vandermonde_features(x, bank: VandermondeBank) -> np.ndarray:
    """All ``K`` Vandermonde products; ``x`` is ``(n, d)`` or ``(B, n, d)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = as_cloud(x)[None]
    if x.ndim != 3 or x.shape[1:] != (bank.n, bank.d):
        raise ValueError(f"expected clouds of shape ({bank.n}, {bank.d}), got {x.shape[-2:]}")
    diffs = _pair_diffs(_project(x, bank.y))
    if diffs.shape[-1] > LOG_PRODUCT_PAIRS:
        with np.errstate(divide="ignore"):
            logabs = np.log(np.abs(diffs)).sum(axis=-1)
        sign = np.where(np.count_nonzero(diffs < 0, axis=-1) & 1, -1.0, 1.0)
        with np.errstate(over="ignore"):
            out = sign * np.exp(logabs)
    else:
        with np.errstate(over="ignore"):
            out = np.prod(diffs, axis=-1)
    if not np.all(np.isfinite(out)):
        raise OverflowError("Vandermonde product overflowed double precision")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# binary sidecars

_ENSEMBLE_MAGIC = b"APSIENS\0"
_BANK_MAGIC = b"AVANDBK\0"
_SIDECAR_VERSION = 1
_HEADER = "<HIIIQ"  # version, n, d, m or K, seed


def ensemble_to_bytes(e: ProjectionEnsemble) -> bytes:
    return (_ENSEMBLE_MAGIC + struct.pack(_HEADER, _SIDECAR_VERSION, e.n, e.d, e.m, e.seed)
            + le_doubles(e.a) + le_doubles(e.b))


def bank_to_bytes(bank: VandermondeBank) -> bytes:
    return (_BANK_MAGIC + struct.pack(_HEADER, _SIDECAR_VERSION, bank.n, bank.d, bank.K, bank.seed)
            + le_doubles(bank.y))


def _read_header(r: Reader, magic: bytes):
    r.expect_magic(magic)
    version, n, d, m, seed = r.unpack(_HEADER)
    if version != _SIDECAR_VERSION:
        raise FormatError(f"{r.what}: unsupported version {version}")
    return n, d, m, seed


def read_ensemble(r: Reader) -> ProjectionEnsemble:
    n, d, m, seed = _read_header(r, _ENSEMBLE_MAGIC)
    a = r.doubles(m * d).reshape(m, d)
    b = r.doubles(m * (n + 1)).reshape(m, n + 1)
    return ProjectionEnsemble(n, d, m, a, b, seed)


def read_bank(r: Reader) -> VandermondeBank:
    n, d, K, seed = _read_header(r, _BANK_MAGIC)
    return VandermondeBank(n, d, K, r.doubles(K * d).reshape(K, d), seed)


def ensemble_from_bytes(buf: bytes) -> ProjectionEnsemble:
    r = Reader(buf, "ensemble")
    e = read_ensemble(r)
    r.done()
    return e


def bank_from_bytes(buf: bytes) -> VandermondeBank:
    r = Reader(buf, "vandermonde bank")
    bank = read_bank(r)
    r.done()
    return bank


def save_ensemble(e: ProjectionEnsemble, path) -> None:
    Path(path).write_bytes(ensemble_to_bytes(e))


def load_ensemble(path) -> ProjectionEnsemble:
    return ensemble_from_bytes(Path(path).read_bytes())


def save_bank(bank: VandermondeBank, path) -> None:
    Path(path).write_bytes(bank_to_bytes(bank))


def load_bank(path) -> VandermondeBank:
    return bank_from_bytes(Path(path).read_bytes())
