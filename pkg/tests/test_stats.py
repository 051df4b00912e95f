import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from dprgmi.errors import BootstrapDegeneracyError, InputError, UndefinedStatisticError
from dprgmi.stats import (BootstrapResult, bootstrap, bootstrap_many, paired_bootstrap, rank_with_ties,
                          resample_indices, spearman)


def test_ranks_with_ties():
    np.testing.assert_array_equal(rank_with_ties([1, 2, 2, 4]), [1, 2.5, 2.5, 4])
    np.testing.assert_array_equal(rank_with_ties([3, 1, 3, 3]), [3, 1, 3, 3])
    np.testing.assert_array_equal(rank_with_ties([10, 20, 30]), [1, 2, 3])
    np.testing.assert_array_equal(rank_with_ties([7.0] * 5), [3.0] * 5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40))
def test_ranks_match_scipy(v):
    np.testing.assert_allclose(rank_with_ties(v), scipy.stats.rankdata(v), rtol=0, atol=1e-12)


def test_spearman_hand_cases():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert spearman([1, 2, 3, 4, 5], [1, 3, 2, 5, 4]) == pytest.approx(0.8, abs=1e-12)
    assert spearman([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]) == pytest.approx(0.8, abs=1e-12)


def test_spearman_matches_scipy_with_ties(rng):
    for _ in range(50):
        x = rng.integers(0, 5, 20)
        y = rng.integers(0, 5, 20)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        assert spearman(x, y) == pytest.approx(scipy.stats.spearmanr(x, y)[0], abs=1e-12)


def test_spearman_invariances(rng):
    x, y = rng.standard_normal(30), rng.standard_normal(30)
    r = spearman(x, y)
    assert spearman(y, x) == pytest.approx(r, abs=1e-15)
    assert spearman(np.exp(x), y ** 3) == pytest.approx(r, abs=1e-15)
    assert spearman(-x, y) == pytest.approx(-r, abs=1e-15)


def test_spearman_errors():
    with pytest.raises(UndefinedStatisticError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(InputError):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(InputError):
        spearman([1], [2])


def test_bootstrap_constant_statistic():
    r = bootstrap(lambda idx: 4.2, 50, 200, 0)
    assert r.point == 4.2
    assert r.mean == r.ci_low == r.ci_high == 4.2
    assert r.std == 0.0 and r.B == 200 and r.dropped == 0


def test_bootstrap_mean_clt(rng):
    x = rng.standard_normal(1000)
    r = bootstrap(lambda idx: x[idx].mean(), x.size, 1000, 3)
    se = x.std() / np.sqrt(x.size)
    assert abs(r.std / se - 1) <= 0.15
    assert abs(r.mean - r.point) <= 3 * r.std / np.sqrt(1000)
    assert r.ci_low < r.point < r.ci_high


def test_same_seed_same_result_and_workers(rng):
    x = rng.standard_normal(100)
    f = lambda idx: float(np.median(x[idx]))
    a = bootstrap(f, 100, 300, 9)
    assert bootstrap(f, 100, 300, 9) == a
    assert bootstrap(f, 100, 300, 9, workers=4) == a
    assert bootstrap(f, 100, 300, 10) != a


def test_resamples_shared_across_statistics(rng):
    seen = {"a": [], "b": []}

    def stat(key):
        def f(idx):
            seen[key].append(idx.copy())
            return 0.0
        return f

    paired_bootstrap({"a": stat("a"), "b": stat("b")}, 20, 30, 1)
    for ia, ib in zip(seen["a"], seen["b"]):
        np.testing.assert_array_equal(ia, ib)
    np.testing.assert_array_equal(seen["a"][1], resample_indices(20, 0, 1))


def test_undefined_resamples_dropped():
    def f(idx):
        if idx.size and resample_indices(40, 0, 2).tobytes() == idx.tobytes():
            raise UndefinedStatisticError("boom")
        return [float(idx.mean()), 1.0]

    out = bootstrap_many(f, ["m", "one"], 40, 50, 2)
    assert out["m"].dropped == out["one"].dropped == 1


def test_too_many_drops_raise():
    def f(idx):
        if idx[0] % 2 == 0 and not np.array_equal(idx, np.arange(idx.size)):
            raise UndefinedStatisticError("odd")
        return 0.0

    with pytest.raises(BootstrapDegeneracyError):
        bootstrap(f, 30, 100, 0)


def test_result_round_trip():
    r = BootstrapResult(1.0, 1.1, 0.2, 0.7, 1.5, 1000, 3)
    assert BootstrapResult.from_dict(r.to_dict()) == r
