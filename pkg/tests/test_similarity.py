import numpy as np
import pytest

from reusesim.similarity import measure, measure_stream
from reusesim.tensors import QuantTensor


def vec(values):
    return QuantTensor.vector(values)


def test_self_comparison_total_one():
    rng = np.random.default_rng(0)
    x = vec(rng.integers(-128, 128, size=100, dtype=np.int8))
    rep = measure(x, x)
    assert rep.total == 1.0
    assert rep.per_subvector4_all_zero == 1.0
    assert rep.zero_identical + rep.nonzero_identical == 1.0


def test_counts_from_definition():
    rep = measure(vec([1, 2, 3, 4]), vec([1, 2, 0, 4]))
    assert rep.total == 0.75
    assert rep.zero_identical == 0.0
    assert rep.nonzero_identical == 0.75
    assert rep.per_subvector4_all_zero == 0.0


def test_zero_identical_counted():
    rep = measure(vec([0, 0, 5, 7]), vec([0, 1, 5, 9]))
    assert rep.total == 0.5
    assert rep.zero_identical == 0.25
    assert rep.nonzero_identical == 0.25


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        measure(vec([1]), vec([1, 2]))


def test_subvector4_matches_p4_monte_carlo():
    # i.i.d. per-element match probability p: aligned all-4 groups ~ p^4.
    p = 0.45
    n = 1_000_000
    rng = np.random.default_rng(42)
    prev = rng.integers(-100, 100, size=n, dtype=np.int8)
    match = rng.random(n) < p
    curr = np.where(match, prev, prev + 1).astype(np.int8)
    rep = measure(vec(curr), vec(prev))
    p4 = p ** 4
    sigma = (p4 * (1 - p4) / (n / 4)) ** 0.5
    assert abs(rep.per_subvector4_all_zero - p4) < 3 * sigma + 1e-9
    assert rep.per_subvector4_all_zero < rep.total


def test_total_symmetric():
    rng = np.random.default_rng(5)
    a = vec(rng.integers(-128, 128, size=257, dtype=np.int8))
    b = vec(rng.integers(-128, 128, size=257, dtype=np.int8))
    assert measure(a, b).total == measure(b, a).total


def test_permutation_preserves_elementwise_parts():
    rng = np.random.default_rng(6)
    a = rng.integers(-4, 4, size=64, dtype=np.int8)
    b = rng.integers(-4, 4, size=64, dtype=np.int8)
    perm = rng.permutation(64)
    r1 = measure(vec(a), vec(b))
    r2 = measure(vec(a[perm]), vec(b[perm]))
    assert r1.total == r2.total
    assert r1.zero_identical == r2.zero_identical
    assert r1.nonzero_identical == r2.nonzero_identical


def test_stream_identical_frames():
    x = vec([1, 2, 3, 4])
    reports = measure_stream([x, x, x])
    assert len(reports) == 2
    assert all(r.total == 1.0 for r in reports)


def test_stream_distinct_tail():
    a = vec([1, 2, 3, 4])
    b = vec([5, 6, 7, 8])
    totals = [r.total for r in measure_stream([a, a, b])]
    assert totals == [1.0, 0.0]


def test_stream_matches_pairwise_measure():
    rng = np.random.default_rng(9)
    frames = [vec(rng.integers(-8, 8, size=48, dtype=np.int8)) for _ in range(5)]
    reports = measure_stream(frames)
    for k, rep in enumerate(reports):
        assert rep == measure(frames[k + 1], frames[k])


def test_stream_needs_two_frames():
    with pytest.raises(ValueError):
        measure_stream([vec([1])])
