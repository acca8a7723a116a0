"""Permutations, group enumeration and the L1 orbit distances.

Conventions
-----------
A point cloud is a float array of shape ``(n, d)``: ``n`` points in ``R^d``.
A 1-D array of length ``n`` is read as ``n`` points in ``R^1``.

Permutations are 0-based. Applying ``sigma`` to a cloud relabels its points,
``(sigma x)[i] = x[sigma[i]]``. Composition is defined so that

    apply_perm(apply_perm(x, tau), sigma) == apply_perm(x, compose(sigma, tau))

``d_plus`` minimises the entrywise L1 distance over the alternating group,
``d_pm`` over the full symmetric group.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

#: Largest ``n`` accepted by the enumeration oracles (9! = 362880 permutations).
MAX_ENUM_N = 9


@dataclass(frozen=True)
class Permutation:
    mapping: tuple[int, ...]
    sign: int

    @classmethod
    def from_mapping(cls, mapping: Sequence[int]) -> "Permutation":
        m = tuple(int(i) for i in mapping)
        return cls(m, perm_sign(m))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)), 1)

    @classmethod
    def transposition(cls, n: int, i: int, j: int) -> "Permutation":
        m = list(range(n))
        m[i], m[j] = m[j], m[i]
        return cls(tuple(m), 1 if i == j else -1)

    @property
    def n(self) -> int:
        return len(self.mapping)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.mapping, dtype=dtype if dtype is not None else np.intp)

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return Permutation(tuple(inv), self.sign)


def _check_bijection(mapping: Sequence[int]) -> list[int]:
    m = [int(i) for i in mapping]
    n = len(m)
    seen = [False] * n
    for i in m:
        if i < 0 or i >= n:
            raise ValueError(f"index {i} out of range for a permutation of {n}")
        if seen[i]:
            raise ValueError(f"index {i} repeated; mapping is not a bijection")
        seen[i] = True
    return m


def _count_inversions(a: list[int]) -> int:
    # bottom-up merge sort; O(n log n)
    n = len(a)
    buf = a[:]
    tmp = [0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if buf[i] <= buf[j]:
                    tmp[k] = buf[i]
                    i += 1
                else:
                    tmp[k] = buf[j]
                    inv += mid - i
                    j += 1
                k += 1
            tmp[k:k + mid - i] = buf[i:mid]
            k += mid - i
            tmp[k:k + hi - j] = buf[j:hi]
        buf, tmp = tmp, buf
        width *= 2
    return inv


def perm_sign(mapping: Sequence[int]) -> int:
    """Sign of a permutation, ``(-1) ** inversions``."""
    m = _check_bijection(mapping)
    return -1 if _count_inversions(m) & 1 else 1


def compose(sigma: Permutation, tau: Permutation) -> Permutation:
    """Permutation equal to applying ``tau`` first, then ``sigma``."""
    if sigma.n != tau.n:
        raise ValueError(f"cannot compose permutations of {sigma.n} and {tau.n}")
    return Permutation(tuple(tau.mapping[i] for i in sigma.mapping), sigma.sign * tau.sign)


def as_cloud(x) -> np.ndarray:
    """Validate ``x`` as a finite ``(n, d)`` float64 cloud."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a point cloud of shape (n, d), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point cloud has non-finite entries")
    return arr


def apply_perm(x, sigma: Permutation | Sequence[int]) -> np.ndarray:
    """Relabel points: row ``i`` of the result is row ``sigma[i]`` of ``x``.

    ``x`` may carry extra leading batch axes; the point axis is ``-2``.
    A 1-D ``x`` is permuted directly.
    """
    arr = np.asarray(x)
    idx = np.asarray(sigma.mapping if isinstance(sigma, Permutation) else sigma, dtype=np.intp)
    axis = 0 if arr.ndim == 1 else -2
    if arr.shape[axis] != idx.shape[0]:
        raise ValueError(f"permutation of {idx.shape[0]} applied to {arr.shape[axis]} points")
    return np.take(arr, idx, axis=axis)


def _abs_diff_parts(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # TwoSum: hi + lo == |a - b| exactly, so fsum over the parts is correctly rounded
    s = a - b
    bb = s - a
    lo = (a - (s - bb)) + (-b - bb)
    neg = s < 0
    return np.where(neg, -s, s), np.where(neg, -lo, lo)


def _exact_l1(a: np.ndarray, b: np.ndarray) -> float:
    hi, lo = _abs_diff_parts(a.ravel(), b.ravel())
    return math.fsum(itertools.chain(hi.tolist(), lo.tolist()))


def l1_norm_diff(x, y) -> float:
    """Entrywise L1 distance between two clouds, correctly rounded."""
    x, y = as_cloud(x), as_cloud(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return _exact_l1(x, y)


def dist_sym_1d(x, y) -> float:
    """``d_pm`` for scalar clouds: L1 distance of the sorted vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return _exact_l1(np.sort(x), np.sort(y))


def _check_guard(n: int) -> None:
    if n > MAX_ENUM_N:
        raise ValueError(f"n={n} exceeds the enumeration guard n <= {MAX_ENUM_N}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")


def table_signs(table: np.ndarray) -> np.ndarray:
    """Signs of the permutations stored row-wise in ``table`` (any leading shape)."""
    n = table.shape[-1]
    parity = np.zeros(table.shape[:-1], dtype=np.int64)
    for i in range(n - 1):
        parity += (table[..., i, None] > table[..., i + 1:]).sum(axis=-1)
    return 1 - 2 * (parity & 1)


@lru_cache(maxsize=None)
def perm_table(n: int, even_only: bool) -> np.ndarray:
    """All permutations of ``n`` (or only the even ones) as a read-only int array."""
    _check_guard(n)
    table = np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)
    if even_only:
        table = table[table_signs(table) > 0]
    table.flags.writeable = False
    return table


def enumerate_group(n: int, even_only: bool = False) -> Iterator[Permutation]:
    """Yield every element of S_n, or of A_n when ``even_only``."""
    _check_guard(n)
    for row in itertools.permutations(range(n)):
        s = -1 if _count_inversions(list(row)) & 1 else 1
        if even_only and s < 0:
            continue
        yield Permutation(row, s)


def _cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # cost[..., i, j] = ||x_i - y_j||_1
    return np.abs(x[..., :, None, :] - y[..., None, :, :]).sum(axis=-1)


def _bruteforce(x, y, even_only: bool) -> float:
    x, y = as_cloud(x), as_cloud(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    n = x.shape[0]
    table = perm_table(n, even_only)
    cost = _cost_matrix(x, y)
    totals = cost[np.arange(n), table].sum(axis=1)
    best = totals.min()
    # the float sums only shortlist; the winner is decided on exact sums
    slack = 1e-9 * best + 1e-300
    candidates = table[totals <= best + slack]
    if len(candidates) > 1:
        # assignments pairing the same classes of identical rows have equal exact sums
        xcls = np.unique(x, axis=0, return_inverse=True)[1].ravel()
        ycls = np.unique(y, axis=0, return_inverse=True)[1].ravel()
        keys = np.sort(xcls[None, :] * n + ycls[candidates], axis=1)
        candidates = candidates[np.unique(keys, axis=0, return_index=True)[1]]
    return min(_exact_l1(x, y[c]) for c in candidates)


def dist_plus_bruteforce(x, y) -> float:
    """``d_plus(x, y) = min over even sigma of ||x - sigma y||_1`` by enumeration."""
    return _bruteforce(x, y, even_only=True)


def dist_sym_bruteforce(x, y) -> float:
    """``d_pm(x, y) = min over all sigma of ||x - sigma y||_1`` by enumeration."""
    return _bruteforce(x, y, even_only=False)


def dist_plus_batch(x: np.ndarray, y: np.ndarray, even_only: bool = True) -> np.ndarray:
    """Vectorised enumeration of ``d_plus`` (or ``d_pm``) over a batch of pairs.

    ``x`` and ``y`` have shape ``(B, n, d)``. Plain float sums, no exact
    tie refinement; intended for small ``n``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 3:
        raise ValueError(f"expected matching (B, n, d) batches, got {x.shape} and {y.shape}")
    n = x.shape[1]
    table = perm_table(n, even_only)
    cost = _cost_matrix(x, y)
    out = np.full(x.shape[0], np.inf)
    rows = np.arange(n)
    for start in range(0, len(table), 4096):
        block = table[start:start + 4096]
        out = np.minimum(out, cost[:, rows, block].sum(axis=-1).min(axis=-1))
    return out


def dist_parity_dp(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(d_plus, d_pm)`` for a batch of pairs by subset dynamic programming.

    Rows of ``x`` are matched in order to unused rows of ``y``; the state is the
    set of used rows plus the parity of inversions so far. Work is
    ``O(2^n n)`` vector operations over the batch, so it stays fast where the
    ``n!/2`` enumeration does not (``n = 8``).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
        y = y[:, :, None]
    if x.shape != y.shape or x.ndim != 3:
        raise ValueError(f"expected matching (B, n, d) batches, got {x.shape} and {y.shape}")
    b, n, _ = x.shape
    if n > 16:
        raise ValueError(f"n={n} too large for the subset table")
    cost = _cost_matrix(x, y)
    size = 1 << n
    dp = np.full((size, 2, b), np.inf)
    dp[0, 0] = 0.0
    for mask in range(size - 1):
        row = bin(mask).count("1")
        cur = dp[mask]
        if not np.isfinite(cur).any():
            continue
        for j in range(n):
            bit = 1 << j
            if mask & bit:
                continue
            flip = bin(mask >> (j + 1)).count("1") & 1
            step = cur + cost[:, row, j]
            nxt = dp[mask | bit]
            if flip:
                np.minimum(nxt[1], step[0], out=nxt[1])
                np.minimum(nxt[0], step[1], out=nxt[0])
            else:
                np.minimum(nxt, step, out=nxt)
    full = dp[size - 1]
    return full[0], np.minimum(full[0], full[1])
