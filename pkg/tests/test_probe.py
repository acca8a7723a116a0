import csv
import math

import numpy as np
import pytest

from antisym.features import feature_1d, psi_features, sample_ensemble
from antisym.probe import (
    ProbeReport,
    exact_dist_plus,
    probe_psi,
    vandermonde_scaling_demo,
    verify_theorem_1d,
    write_reports_csv,
    write_reports_text,
)
from antisym.symmetry import dist_plus_bruteforce


def test_theorem_hand_example():
    x, y = np.array([0.0, 1.0]), np.array([1.0, 0.0])
    dp = dist_plus_bruteforce(x[:, None], y[:, None])
    assert dp == 2.0
    fx, fy = feature_1d(x), feature_1d(y)
    assert fx.tolist() == [0.0, 1.0, 1.0] and fy.tolist() == [0.0, 1.0, -1.0]
    df = float(np.abs(fx - fy).sum())
    assert dp <= df <= 2 * dp


def test_even_copies_give_zero_on_both_sides(rng):
    x = rng.standard_normal(5)
    y = x[[1, 2, 0, 3, 4]]
    assert dist_plus_bruteforce(x[:, None], y[:, None]) == 0.0
    assert np.array_equal(feature_1d(x), feature_1d(y))


@pytest.mark.parametrize("n", range(2, 9))
def test_verify_theorem_small_runs(n):
    rep = verify_theorem_1d(n, trials=3000, seed=1)
    assert rep.violations == 0 and rep.ok
    assert rep.trials == sum(rep.families.values()) == 3000
    assert 1.0 - 1e-9 <= rep.ratio_min <= rep.ratio_max <= 2.0 + 1e-9
    assert rep.excluded > 0  # the even-copy family lands on d_plus = 0
    assert set(rep.families) >= {"gaussian", "near_ties", "shared_values", "odd_copies"}


def test_verify_theorem_argument_checks():
    for n in (1, 9):
        with pytest.raises(ValueError):
            verify_theorem_1d(n, trials=10)
    with pytest.raises(ValueError):
        verify_theorem_1d(3, trials=0)


def test_verify_theorem_is_deterministic():
    a = verify_theorem_1d(4, trials=500, seed=3)
    b = verify_theorem_1d(4, trials=500, seed=3)
    assert a.row() == b.row()


def test_exact_dist_plus_matches_bruteforce(rng):
    for n in (3, 7):
        x = rng.standard_normal((15, n, 2))
        y = rng.standard_normal((15, n, 2))
        got = exact_dist_plus(x, y)
        ref = [dist_plus_bruteforce(a, b) for a, b in zip(x, y)]
        assert np.allclose(got, ref, rtol=1e-13, atol=0)


@pytest.mark.parametrize("n, d", [(3, 2), (4, 2), (3, 3)])
def test_probe_psi_small(n, d):
    rep = probe_psi(n, d, pairs=800, seed=2)
    assert rep.m == 2 * n * d + 1
    assert rep.breakdown == {"injectivity": 0, "invariance": 0}
    assert 0 < rep.ratio_min <= rep.ratio_max < math.inf
    assert rep.excluded == rep.families["even_copies"]


def test_one_projection_is_not_injective():
    # with m=1, clouds differing only orthogonally to the direction collide
    e = sample_ensemble(3, 2, m=1, seed=0)
    a = e.a[0] / np.linalg.norm(e.a[0])
    perp = np.array([-a[1], a[0]])
    x = np.outer([0.1, 0.5, 0.9], a)
    y = x + np.outer([0.3, -0.2, 0.7], perp)
    assert np.abs(psi_features(x, e) - psi_features(y, e)).sum() <= 1e-12
    assert dist_plus_bruteforce(x, y) > 0.1


def test_probe_psi_argument_checks():
    with pytest.raises(ValueError):
        probe_psi(9, 2)
    with pytest.raises(ValueError):
        probe_psi(3, 0)


def test_scaling_examples():
    t1 = vandermonde_scaling_demo(3, 1, t_values=(1.0,))
    assert t1.vandermonde_ratio() == [1.0] and t1.psi_ratio == [1.0]
    t2 = vandermonde_scaling_demo(3, 1, t_values=(2.0,))
    assert t2.vandermonde_ratio()[0] == pytest.approx(8.0, rel=1e-12)
    assert t2.psi_ratio[0] == pytest.approx(2.0, rel=1e-12)
    t3 = vandermonde_scaling_demo(20, 2, t_values=(1.1,))
    assert t3.vandermonde_log_ratio[0] == pytest.approx(190 * math.log(1.1), rel=1e-9)
    for tab in (t1, t2, t3):
        assert tab.ratio_violations() == 0


def test_scaling_slopes():
    for n, d in [(2, 1), (4, 3), (12, 2), (20, 1)]:
        tab = vandermonde_scaling_demo(n, d, seed=5)
        assert abs(tab.vandermonde_slope - n * (n - 1) // 2) <= 1e-6
        assert abs(tab.psi_slope - 1.0) <= 1e-6
        assert tab.ok


def test_scaling_argument_checks():
    with pytest.raises(ValueError):
        vandermonde_scaling_demo(3, 1, t_values=(1.0, -2.0))
    with pytest.raises(ValueError):
        vandermonde_scaling_demo(1, 1)


def test_report_files(tmp_path):
    reps = [verify_theorem_1d(3, trials=200), probe_psi(3, 2, pairs=200)]
    write_reports_csv(reps, tmp_path / "r.csv")
    write_reports_text(reps, tmp_path / "r.txt")
    with open(tmp_path / "r.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["name"] for r in rows] == ["theorem_1d", "psi"]
    assert rows[0]["breakdown"] == "lower_bound=0;upper_bound=0"
    assert float(rows[1]["ratio_min"]) == reps[1].ratio_min
    text = (tmp_path / "r.txt").read_text(encoding="utf-8").splitlines()
    assert len(text) == 2 and all(line.startswith("[ok]") for line in text)


def test_report_failure_state():
    rep = ProbeReport("x", 10, 2, 0.5, 1.0, breakdown={"lower_bound": 2})
    assert not rep.ok and rep.summary().startswith("[FAIL]")
