"""The three regression ansätze for functions of point clouds.

Every model splits evaluation into two stages:

* ``featurize(X)`` computes the frozen part (feature maps whose random
  parameters never train) for a batch ``X`` of shape ``(B, n, d)``;
* ``forward(feats)`` / ``backward(cache, g)`` run the trainable networks on
  those features, with ``backward`` returning gradients aligned with
  ``params()``.

Training precomputes ``featurize`` once per split.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..features import (
    ProjectionEnsemble,
    VandermondeBank,
    bank_to_bytes,
    ensemble_to_bytes,
    psi_features,
    sample_ensemble,
    sample_vandermonde_bank,
    vandermonde_features,
)
from ..symmetry import Permutation, apply_perm, table_signs
from .mlp import MLPParams, init_mlp, mlp_backward, mlp_forward

ANSATZ_NAMES = ("bilipschitz", "vandermonde", "mlp")


def _batch(x, n: int, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (n, d):
        raise ValueError(f"expected clouds of shape ({n}, {d}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("input clouds have non-finite entries")
    return arr, single


class _Model:
    tag = ""
    n: int
    d: int

    def featurize(self, x) -> tuple[np.ndarray, ...]:
        raise NotImplementedError

    def forward(self, feats):
        raise NotImplementedError

    def backward(self, cache, upstream) -> list[np.ndarray]:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        raise NotImplementedError

    def nets(self) -> list[MLPParams]:
        raise NotImplementedError

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def feature_key(self) -> str:
        """Digest of everything ``featurize`` depends on (for on-disk caches)."""
        return hashlib.sha256(self._frozen_bytes()).hexdigest()[:16]

    def _frozen_bytes(self) -> bytes:
        return f"{self.tag}:{self.n}:{self.d}".encode()

    def predict(self, x, chunk: int = 4096):
        arr, single = _batch(x, self.n, self.d)
        out = np.empty(arr.shape[0])
        for start in range(0, arr.shape[0], chunk):
            out[start:start + chunk] = self.forward(self.featurize(arr[start:start + chunk]))[0]
        return float(out[0]) if single else out


@dataclass(eq=False)
class BiLipschitzModel(_Model):
    """``h(x) = (N(Psi(x)) - N(Psi(tau0 x))) / 2`` with a frozen projection ensemble."""
    ensemble: ProjectionEnsemble
    net: MLPParams
    tau0: Permutation
    init_seed: int = 0
    tag = "bilipschitz"

    def __post_init__(self):
        if self.net.in_dim != self.ensemble.m or self.net.out_dim != 1:
            raise ValueError("network must map the m ensemble features to a scalar")
        if self.tau0.sign != -1 or self.tau0.n != self.ensemble.n:
            raise ValueError("tau0 must be an odd permutation of the n points")

    @property
    def n(self) -> int:
        return self.ensemble.n

    @property
    def d(self) -> int:
        return self.ensemble.d

    def _frozen_bytes(self) -> bytes:
        return ensemble_to_bytes(self.ensemble) + repr(self.tau0.mapping).encode()

    def featurize(self, x):
        arr, _ = _batch(x, self.n, self.d)
        return psi_features(arr, self.ensemble), psi_features(apply_perm(arr, self.tau0), self.ensemble)

    def forward(self, feats):
        fa, fb = feats
        # two same-shaped calls: swapping the branches swaps the outputs bitwise
        na, ca = mlp_forward(self.net, fa)
        nb, cb = mlp_forward(self.net, fb)
        return 0.5 * (na - nb), (ca, cb)

    def backward(self, cache, upstream):
        ca, cb = cache
        g = 0.5 * np.asarray(upstream, dtype=np.float64)
        ga, _ = mlp_backward(self.net, ca, g)
        gb, _ = mlp_backward(self.net, cb, -g)
        return [x + y for x, y in zip(ga, gb)]

    def params(self):
        return self.net.params()

    def nets(self):
        return [self.net]


def canonical_order(x: np.ndarray) -> np.ndarray:
    """Per-sample lexicographic row order of a ``(B, n, d)`` batch."""
    keys = np.moveaxis(x[..., ::-1], -1, 0)
    return np.lexsort(keys, axis=-1)


@dataclass(eq=False)
class VandermondeModel(_Model):
    """``sum_k s_k(x) f_{y_k}(x)`` with DeepSets coefficients ``s = rho(sum_i phi(x_i))``.

    Points are put in a canonical (lexicographic) order before either stage;
    the reordering sign is folded into the Vandermonde products, so
    relabelling the input changes nothing but that sign.
    """
    bank: VandermondeBank
    phi: MLPParams
    rho: MLPParams
    init_seed: int = 0
    tag = "vandermonde"

    def __post_init__(self):
        if self.phi.in_dim != self.bank.d:
            raise ValueError("phi must take points of dimension d")
        if self.rho.in_dim != self.phi.out_dim or self.rho.out_dim != self.bank.K:
            raise ValueError("rho must map the pooled phi output to K coefficients")

    @property
    def n(self) -> int:
        return self.bank.n

    @property
    def d(self) -> int:
        return self.bank.d

    def _frozen_bytes(self) -> bytes:
        return bank_to_bytes(self.bank)

    def featurize(self, x):
        arr, _ = _batch(x, self.n, self.d)
        order = canonical_order(arr)
        xc = np.take_along_axis(arr, order[..., None], axis=1)
        f = vandermonde_features(xc, self.bank) * table_signs(order)[:, None]
        return xc, f

    def forward(self, feats):
        xc, f = feats
        b, n, d = xc.shape
        h, cphi = mlp_forward(self.phi, xc.reshape(b * n, d))
        pooled = h.reshape(b, n, -1).sum(axis=1)
        s, crho = mlp_forward(self.rho, pooled)
        if s.ndim == 1:
            s = s[:, None]
        return (s * f).sum(axis=1), (cphi, crho, f, n)

    def backward(self, cache, upstream):
        cphi, crho, f, n = cache
        g = np.asarray(upstream, dtype=np.float64)
        ds = g[:, None] * f
        grho, dpooled = mlp_backward(self.rho, crho, ds[:, 0] if self.rho.out_dim == 1 else ds)
        dh = np.repeat(dpooled, n, axis=0)
        gphi, _ = mlp_backward(self.phi, cphi, dh)
        return gphi + grho

    def params(self):
        return self.phi.params() + self.rho.params()

    def nets(self):
        return [self.phi, self.rho]


@dataclass(eq=False)
class PlainMLPModel(_Model):
    """An MLP on the flattened cloud; no symmetry imposed."""
    n_points: int
    dim: int
    net: MLPParams
    init_seed: int = 0
    tag = "mlp"

    def __post_init__(self):
        if self.net.in_dim != self.n_points * self.dim or self.net.out_dim != 1:
            raise ValueError("network must map n*d inputs to a scalar")

    @property
    def n(self) -> int:
        return self.n_points

    @property
    def d(self) -> int:
        return self.dim

    def featurize(self, x):
        arr, _ = _batch(x, self.n, self.d)
        return (arr.reshape(arr.shape[0], -1),)

    def forward(self, feats):
        return mlp_forward(self.net, feats[0])

    def backward(self, cache, upstream):
        return mlp_backward(self.net, cache, upstream)[0]

    def params(self):
        return self.net.params()

    def nets(self):
        return [self.net]


AnsatzModel = BiLipschitzModel | VandermondeModel | PlainMLPModel

DEFAULT_HIDDEN = {
    "bilipschitz": (256, 256, 64),
    "mlp": (256, 256, 64),
    "vandermonde_phi": (128, 128),
    "vandermonde_rho": (128,),
}


def default_tau0(n: int) -> Permutation:
    return Permutation.transposition(n, 0, 1)


def build_model(ansatz: str, n: int, d: int, *, feature_seed: int = 0, init_seed: int = 0,
                hidden=None, phi_hidden=None, rho_hidden=None, m: int | None = None,
                K: int | None = None, activation: str = "relu") -> AnsatzModel:
    """Construct a freshly initialised model of the named ansatz."""
    rng = np.random.default_rng(init_seed)
    if ansatz == "bilipschitz":
        ens = sample_ensemble(n, d, m, seed=feature_seed)
        hid = tuple(DEFAULT_HIDDEN["bilipschitz"] if hidden is None else hidden)
        net = init_mlp((ens.m, *hid, 1), activation, rng)
        return BiLipschitzModel(ens, net, default_tau0(n), init_seed)
    if ansatz == "vandermonde":
        bank = sample_vandermonde_bank(n, d, K, seed=feature_seed)
        ph = tuple(DEFAULT_HIDDEN["vandermonde_phi"] if phi_hidden is None else phi_hidden)
        if not ph:
            raise ValueError("phi needs at least one layer width")
        rh = tuple(rho_hidden if rho_hidden is not None else DEFAULT_HIDDEN["vandermonde_rho"])
        phi = init_mlp((d, *ph), activation, rng)
        rho = init_mlp((ph[-1], *rh, bank.K), activation, rng)
        return VandermondeModel(bank, phi, rho, init_seed)
    if ansatz == "mlp":
        hid = tuple(DEFAULT_HIDDEN["mlp"] if hidden is None else hidden)
        return PlainMLPModel(n, d, init_mlp((n * d, *hid, 1), activation, rng), init_seed)
    raise ValueError(f"unknown ansatz {ansatz!r}; choose from {', '.join(ANSATZ_NAMES)}")


def forward_h(model: BiLipschitzModel, x):
    if not isinstance(model, BiLipschitzModel):
        raise TypeError("forward_h needs a BiLipschitzModel")
    return model.predict(x)


def forward_vandermonde_baseline(model: VandermondeModel, x):
    if not isinstance(model, VandermondeModel):
        raise TypeError("forward_vandermonde_baseline needs a VandermondeModel")
    return model.predict(x)


def param_count(model) -> int:
    """Trainable scalar count; frozen ensembles and banks are excluded."""
    return model.param_count()
