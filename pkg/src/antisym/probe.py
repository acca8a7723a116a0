"""Sampled checks of the bi-Lipschitz and injectivity claims.

* ``verify_theorem_1d`` checks ``d_plus <= ||F(x) - F(y)||_1 <= 2 d_plus``
  for the scalar feature map on Gaussian and adversarial pairs.
* ``probe_psi`` looks for pairs in distinct orbits that the sampled
  ``Psi`` fails to separate, and reports empirical distortion bounds.
* ``vandermonde_scaling_demo`` measures homogeneity degrees by a log-log fit.

``d_plus`` comes from exact enumeration of the alternating group for small
``n`` and from the subset dynamic programme otherwise; both are exact.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import feature_1d_rows, psi_features, sample_ensemble, vandermonde_log
from .symmetry import as_cloud, dist_parity_dp, dist_plus_batch, table_signs

RATIO_FLOOR = 1e-12
ENUM_MAX_N = 6

REPORT_FIELDS = ("name", "trials", "violations", "ratio_min", "ratio_max", "excluded",
                 "n", "d", "m", "seed", "breakdown")


@dataclass
class ProbeReport:
    name: str
    trials: int
    violations: int
    ratio_min: float
    ratio_max: float
    excluded: int = 0
    n: int = 0
    d: int = 1
    m: int = 0
    seed: int = 0
    families: dict = field(default_factory=dict)
    breakdown: dict = field(default_factory=dict)  # violation kind -> count

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in REPORT_FIELDS}
        out["breakdown"] = ";".join(f"{k}={v}" for k, v in self.breakdown.items())
        return out

    def summary(self) -> str:
        status = "ok" if self.ok else "FAIL"
        fam = ", ".join(f"{k}={v}" for k, v in self.families.items())
        return (f"[{status}] {self.name}: n={self.n} d={self.d} m={self.m} seed={self.seed} "
                f"trials={self.trials} violations={self.violations} "
                f"({', '.join(f'{k}={v}' for k, v in self.breakdown.items())}) "
                f"ratio in [{self.ratio_min:.6g}, {self.ratio_max:.6g}] excluded={self.excluded}"
                + (f" families: {fam}" if fam else ""))


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        w.writeheader()
        for rep in reports:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rep.row().items()})


def write_reports_text(reports, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(rep.summary() + "\n")


def exact_dist_plus(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``d_plus`` for a ``(B, n, d)`` batch of pairs."""
    n = x.shape[1]
    if n <= ENUM_MAX_N:
        return dist_plus_batch(x, y)
    return dist_parity_dp(x, y)[0]


def _random_perms(rng, count: int, n: int, parity: int | None = None) -> np.ndarray:
    perms = np.argsort(rng.random((count, n)), axis=1)
    if parity is None or n < 2:
        return perms
    wrong = table_signs(perms) != parity
    perms[wrong, 0], perms[wrong, 1] = perms[wrong, 1], perms[wrong, 0].copy()
    return perms


def _relabel(x: np.ndarray, perms: np.ndarray) -> np.ndarray:
    return np.take_along_axis(x, perms[..., None], axis=1)


def _pair_families_1d(n: int, trials: int, rng) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Gaussian pairs plus families that sit on or near the tie set."""
    names = ["gaussian", "near_ties", "shared_values", "integer_grid", "odd_copies",
             "even_copies", "odd_copies_perturbed", "scaled_copies"]
    share = {k: trials // (2 * (len(names) - 1)) for k in names[1:]}
    share["gaussian"] = trials - sum(share.values())
    out = {}
    c = share["gaussian"]
    out["gaussian"] = (rng.standard_normal((c, n)), rng.standard_normal((c, n)))

    c = share["near_ties"]
    x = rng.standard_normal((c, n))
    y = rng.standard_normal((c, n))
    for arr in (x, y):
        i = rng.integers(0, n, c)
        j = (i + rng.integers(1, n, c)) % n if n > 1 else i
        arr[np.arange(c), j] = arr[np.arange(c), i] + rng.uniform(-1e-10, 1e-10, c)
    out["near_ties"] = (x, y)

    c = share["shared_values"]
    x = rng.standard_normal((c, n))
    y = rng.standard_normal((c, n))
    k = rng.integers(1, n + 1, c)
    mask = np.arange(n)[None, :] < k[:, None]
    y[mask] = x[mask]
    y = _relabel(y[..., None], _random_perms(rng, c, n))[..., 0]
    out["shared_values"] = (x, y)

    c = share["integer_grid"]
    out["integer_grid"] = (rng.integers(-3, 4, (c, n)).astype(float),
                           rng.integers(-3, 4, (c, n)).astype(float))

    c = share["odd_copies"]
    x = rng.standard_normal((c, n))
    out["odd_copies"] = (x, _relabel(x[..., None], _random_perms(rng, c, n, -1))[..., 0])

    c = share["even_copies"]
    x = rng.standard_normal((c, n))
    out["even_copies"] = (x, _relabel(x[..., None], _random_perms(rng, c, n, 1))[..., 0])

    c = share["odd_copies_perturbed"]
    x = rng.standard_normal((c, n))
    y = _relabel(x[..., None], _random_perms(rng, c, n, -1))[..., 0]
    out["odd_copies_perturbed"] = (x, y + 1e-4 * rng.standard_normal((c, n)))

    c = share["scaled_copies"]
    x = rng.standard_normal((c, n))
    y = _relabel(x[..., None], _random_perms(rng, c, n))[..., 0]
    out["scaled_copies"] = (x, y * rng.uniform(0.5, 2.0, (c, 1)))
    return out


def verify_theorem_1d(n: int, trials: int = 100_000, seed: int = 0, tol: float = 1e-9) -> ProbeReport:
    """Count pairs breaking ``d_plus <= ||F(x)-F(y)||_1 <= 2 d_plus`` beyond relative ``tol``."""
    if not 2 <= n <= 8:
        raise ValueError(f"n must lie in [2, 8] for the exact d_plus oracle, got {n}")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng([seed, n])
    report = ProbeReport("theorem_1d", trials, 0, math.inf, -math.inf, n=n, d=1, m=n + 1, seed=seed,
                         breakdown={"lower_bound": 0, "upper_bound": 0})
    for name, (x, y) in _pair_families_1d(n, trials, rng).items():
        if x.shape[0] == 0:
            continue
        df = np.abs(feature_1d_rows(x) - feature_1d_rows(y)).sum(axis=1)
        dp = dist_parity_dp(x[..., None], y[..., None])[0]
        scale = np.maximum(df, dp)
        low = dp > df + tol * scale
        high = df > 2 * dp + tol * scale
        report.breakdown["lower_bound"] += int(low.sum())
        report.breakdown["upper_bound"] += int(high.sum())
        report.families[name] = int(x.shape[0])
        keep = dp > RATIO_FLOOR
        report.excluded += int((~keep).sum())
        if keep.any():
            r = df[keep] / dp[keep]
            report.ratio_min = min(report.ratio_min, float(r.min()))
            report.ratio_max = max(report.ratio_max, float(r.max()))
    report.violations = sum(report.breakdown.values())
    return report


def probe_psi(n: int, d: int, m: int | None = None, pairs: int = 10_000, seed: int = 0,
              tol: float = 1e-12, ensemble_seed: int | None = None) -> ProbeReport:
    """Injectivity and distortion of a sampled ``Psi`` over random pairs.

    A pair with ``d_plus > tol`` but ``||Psi(x) - Psi(y)||_1 <= tol`` is an
    injectivity violation; a same-orbit pair with a feature gap above ``tol``
    (relative) is an invariance violation. Both should be zero.
    """
    if not 2 <= n <= 8:
        raise ValueError(f"n must lie in [2, 8] for the exact d_plus oracle, got {n}")
    if d < 1 or pairs < 1:
        raise ValueError("need d >= 1 and pairs >= 1")
    ens = sample_ensemble(n, d, m, seed=seed if ensemble_seed is None else ensemble_seed)
    rng = np.random.default_rng([seed, n, d, 7])
    q = pairs // 8
    fams = {}
    c = pairs - 3 * q
    fams["gaussian"] = (rng.standard_normal((c, n, d)), rng.standard_normal((c, n, d)))
    x = rng.standard_normal((q, n, d))
    fams["odd_copies"] = (x, _relabel(x, _random_perms(rng, q, n, -1)))
    x = rng.standard_normal((q, n, d))
    y = _relabel(x, _random_perms(rng, q, n, -1))
    fams["odd_copies_perturbed"] = (x, y + 1e-6 * rng.standard_normal(y.shape))
    x = rng.standard_normal((q, n, d))
    fams["even_copies"] = (x, _relabel(x, _random_perms(rng, q, n, 1)))

    report = ProbeReport("psi", 0, 0, math.inf, -math.inf, n=n, d=d, m=ens.m, seed=ens.seed,
                         breakdown={"injectivity": 0, "invariance": 0})
    for name, (x, y) in fams.items():
        if x.shape[0] == 0:
            continue
        gap = np.abs(psi_features(x, ens) - psi_features(y, ens)).sum(axis=1)
        dp = exact_dist_plus(x, y)
        report.families[name] = int(x.shape[0])
        report.trials += int(x.shape[0])
        distinct = dp > tol
        report.breakdown["injectivity"] += int((distinct & (gap <= tol)).sum())
        same = ~distinct
        ref = np.abs(psi_features(x[same], ens)).sum(axis=1) if same.any() else np.zeros(0)
        report.breakdown["invariance"] += int((gap[same] > tol * np.maximum(ref, 1.0)).sum())
        keep = dp > RATIO_FLOOR
        report.excluded += int((~keep).sum())
        if keep.any():
            r = gap[keep] / dp[keep]
            report.ratio_min = min(report.ratio_min, float(r.min()))
            report.ratio_max = max(report.ratio_max, float(r.max()))
    report.violations = sum(report.breakdown.values())
    return report


@dataclass
class ScalingTable:
    n: int
    d: int
    seed: int
    t_values: list[float]
    vandermonde_log_ratio: list[float]
    psi_ratio: list[float]
    vandermonde_slope: float
    psi_slope: float
    tol: float = 1e-6
    ratio_tol: float = 1e-9

    @property
    def expected_vandermonde_slope(self) -> int:
        return self.n * (self.n - 1) // 2

    def ratio_violations(self) -> int:
        """Scale factors whose ratios miss ``t^(n choose 2)`` or ``t`` by more than ``ratio_tol``."""
        bad = 0
        for t, lv, pr in zip(self.t_values, self.vandermonde_log_ratio, self.psi_ratio):
            want = self.expected_vandermonde_slope * math.log(t)
            bad += abs(lv - want) > self.ratio_tol * max(1.0, abs(want))
            bad += abs(pr - t) > self.ratio_tol * t
        return bad

    @property
    def violations(self) -> int:
        # nan slopes (no t != 1) are unmeasured, not failures
        return int(abs(self.vandermonde_slope - self.expected_vandermonde_slope) > self.tol) \
            + int(abs(self.psi_slope - 1.0) > self.tol) + self.ratio_violations()

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def vandermonde_ratio(self) -> list[float]:
        return [math.exp(v) if v < 700 else math.inf for v in self.vandermonde_log_ratio]

    def summary(self) -> str:
        status = "ok" if self.ok else "FAIL"
        return (f"[{status}] scaling: n={self.n} d={self.d} vandermonde slope "
                f"{self.vandermonde_slope:.9f} (expected {self.expected_vandermonde_slope}), "
                f"psi slope {self.psi_slope:.9f} (expected 1)")

    def as_dict(self) -> dict:
        return asdict(self)


def _slope(log_t: np.ndarray, log_r: np.ndarray) -> float:
    if log_t.size == 1:
        return float(log_r[0] / log_t[0]) if log_t[0] != 0 else math.nan
    lt = log_t - log_t.mean()
    return float((lt * (log_r - log_r.mean())).sum() / (lt * lt).sum())


def vandermonde_scaling_demo(n: int, d: int = 1, t_values=(0.5, 1.0, 1.1, 2.0, 4.0), seed: int = 0,
                             tol: float = 1e-6) -> ScalingTable:
    """Homogeneity degrees of the Vandermonde product and of ``Psi`` by log-log fit."""
    if n < 2:
        raise ValueError("scaling demo needs n >= 2")
    t = np.asarray(t_values, dtype=np.float64)
    if t.size == 0 or np.any(t <= 0):
        raise ValueError("scale factors must be positive")
    rng = np.random.default_rng([seed, n, d])
    x = as_cloud(rng.standard_normal((n, d)))
    y = rng.standard_normal(d)
    y /= np.linalg.norm(y)
    ens = sample_ensemble(n, d, seed=seed)
    s0, l0 = vandermonde_log(x, y)
    if s0 == 0:
        raise ValueError("sampled cloud hit a zero of the Vandermonde product")
    p0 = np.abs(psi_features(x, ens)).sum()
    v_log, p_ratio = [], []
    for ti in t:
        _, lt = vandermonde_log(ti * x, y)
        v_log.append(lt - l0)
        p_ratio.append(float(np.abs(psi_features(ti * x, ens)).sum() / p0))
    log_t = np.log(t)
    informative = log_t != 0
    if not informative.any():
        vs = ps = math.nan
    else:
        vs = _slope(log_t, np.array(v_log))
        ps = _slope(log_t, np.log(np.array(p_ratio)))
    return ScalingTable(n, d, seed, t.tolist(), v_log, p_ratio, vs, ps, tol)
