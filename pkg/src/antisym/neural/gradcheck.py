"""Central finite differences against the hand-written backward passes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import build_model
from .mlp import min_abs_preact

TINY_ARCH = {
    "bilipschitz": dict(hidden=(5, 4)),
    "vandermonde": dict(phi_hidden=(4, 3), rho_hidden=(4,)),
    "mlp": dict(hidden=(5, 4)),
}


@dataclass
class GradCheck:
    ansatz: str
    instances: int
    worst_rel_error: float
    skipped_near_kink: int


def _nets_min_preact(cache) -> float:
    # caches are nested tuples of MLPCache objects and arrays
    if hasattr(cache, "preacts"):
        return min_abs_preact(cache)
    if isinstance(cache, tuple):
        vals = [_nets_min_preact(c) for c in cache]
        return min(vals) if vals else np.inf
    return np.inf


def fd_gradient(model, feats, weights, step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``sum(weights * forward(feats))`` for every parameter."""
    out = []
    for p in model.params():
        g = np.empty_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(np.dot(weights, model.forward(feats)[0]))
            flat[i] = orig - step
            down = float(np.dot(weights, model.forward(feats)[0]))
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        out.append(g)
    return out


def relative_error(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    """Norm-wise relative error between two gradient lists."""
    va = np.concatenate([x.ravel() for x in a])
    vb = np.concatenate([x.ravel() for x in b])
    scale = max(np.linalg.norm(va), np.linalg.norm(vb))
    return 0.0 if scale == 0 else float(np.linalg.norm(va - vb) / scale)


def check_gradients(ansatz: str, instances: int = 100, seed: int = 0, n: int = 3, d: int = 2,
                    batch: int = 3, step: float = 1e-5, kink_margin: float = 1e-3) -> GradCheck:
    """Worst norm-wise relative error over random tiny instances of one ansatz.

    Instances with a relu pre-activation within ``kink_margin`` of zero are
    redrawn, since differences across the kink are not derivatives.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    skipped = 0
    done = 0
    while done < instances:
        s = int(rng.integers(2**31))
        model = build_model(ansatz, n, d, feature_seed=s, init_seed=s + 1, **TINY_ARCH[ansatz])
        for p in model.params():
            p += 0.1 * rng.standard_normal(p.shape)  # nonzero biases too
        x = rng.standard_normal((batch, n, d))
        feats = model.featurize(x)
        weights = rng.standard_normal(batch)
        _, cache = model.forward(feats)
        if _nets_min_preact(cache) < kink_margin:
            skipped += 1
            continue
        analytic = model.backward(cache, weights)
        numeric = fd_gradient(model, feats, weights, step)
        worst = max(worst, relative_error(analytic, numeric))
        done += 1
    return GradCheck(ansatz, instances, worst, skipped)
