import itertools

import numpy as np
import pytest

# criterion number -> (description, outcome); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def cofactor_det(a):
    """Laplace expansion along the first row; independent of any LU code."""
    a = [list(map(float, row)) for row in a]
    n = len(a)
    if n == 1:
        return a[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in a[1:]]
        total += (-1) ** j * a[0][j] * cofactor_det(minor)
    return total


def inversion_sign(mapping):
    inv = sum(1 for i, j in itertools.combinations(range(len(mapping)), 2) if mapping[i] > mapping[j])
    return -1 if inv % 2 else 1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    groups = {}
    for key, entry in ACCEPTANCE.items():
        groups.setdefault(int(key.rstrip("abcdefgh")), []).append((key, entry))
    for num in sorted(groups):
        parts = sorted(groups[num])
        ok = all(e[1] for _, e in parts)
        if len(parts) == 1:
            desc, _, detail = parts[0][1]
            text = f"{desc} [{detail}]"
        else:
            text = "; ".join(f"({k[-1]}) {'PASS' if e[1] else 'FAIL'}: {e[0]} [{e[2]}]" for k, e in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {num}: {text}")
