import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from i2sb.eval.metrics import energy_distance, sliced_wasserstein, wasserstein2_1d


def test_identical_sets_are_zero(rng):
    a = rng.standard_normal((200, 4))
    assert sliced_wasserstein(a, a.copy()) == 0.0
    assert energy_distance(a, a.copy()) == pytest.approx(0.0, abs=1e-12)


def test_point_masses():
    a = np.zeros((10, 2))
    b = np.tile([[1.5, 0.0]], (7, 1))
    assert sliced_wasserstein(a, b, directions=np.array([[1.0, 0.0]])) == pytest.approx(1.5, abs=1e-15)
    assert energy_distance(a[:1], b[:1]) == pytest.approx(3.0, abs=1e-15)


def test_gaussian_offset():
    # projecting a 2-D offset m onto a uniform direction averages |m cos(theta)| to 2|m|/pi
    rng = np.random.default_rng(0)
    a = rng.standard_normal((10_000, 2))
    b = rng.standard_normal((10_000, 2)) + [3.0, 0.0]
    got = sliced_wasserstein(a, b, n_projections=256, rng=1)
    assert got == pytest.approx(2 * 3.0 / np.pi, rel=0.05)


def test_unequal_sizes_match_quantile_formula():
    # for a = {0, 1} vs b = {0, 0.5, 1}, the quantile functions differ only on (1/3, 1/2) and (1/2, 2/3)
    got = wasserstein2_1d(np.array([0.0, 1.0]), np.array([0.0, 0.5, 1.0]))
    assert got == pytest.approx(np.sqrt(2 * (1 / 6) * 0.25), abs=1e-15)


def test_one_dimensional_equal_size_vs_scipy_ordering(rng):
    # W2 dominates W1 on the line
    u, v = rng.standard_normal(500), rng.standard_normal(500) * 2
    assert wasserstein2_1d(u, v) >= wasserstein_distance(u, v)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 40), m=st.integers(1, 40), d=st.integers(1, 5))
def test_symmetric_and_nonnegative(seed, n, m, d):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, d)), rng.standard_normal((m, d)) + 0.3
    sab, sba = sliced_wasserstein(a, b, 16, 2), sliced_wasserstein(b, a, 16, 2)
    eab, eba = energy_distance(a, b), energy_distance(b, a)
    assert abs(sab - sba) <= 1e-12 and abs(eab - eba) <= 1e-12
    assert sab >= 0 and eab >= 0


@pytest.mark.parametrize("fn", [sliced_wasserstein, energy_distance])
def test_rejects_empty_and_mismatched(fn):
    with pytest.raises(ValueError):
        fn(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        fn(np.zeros((3, 2)), np.zeros((3, 3)))


def test_metrics_agree_on_ranking(rng):
    # growing offsets: both distances must order the candidates the same way
    ref = rng.standard_normal((800, 3))
    cands = [rng.standard_normal((800, 3)) * (1 + 0.1 * k) + 0.15 * k for k in range(6)]
    sw = [sliced_wasserstein(c, ref, 64, 0) for c in cands]
    ed = [energy_distance(c, ref) for c in cands]
    assert np.all(np.diff(sw) > 0) and np.all(np.diff(ed) > 0)
