import numpy as np
import pytest

from adra.distributions import ModifiedEqualRevenue, iron
from adra.levels import IronedMultiplicative, Multiplicative, level_boundary, level_of

import props


@pytest.mark.parametrize("b, k", [(1.0, 0), (5.0, 3), (2.0, 1), (2.0000001, 2), (0.5, 0), (8.0, 3)])
def test_multiplicative_level_of(b, k):
    assert level_of(Multiplicative(1.0, 1.0), b) == k


@pytest.mark.parametrize("r, eps, k, expected", [(1.0, 1.0, 3, 8.0), (2.0, 0.5, 2, 4.5), (1.0, 1.0, 0, 1.0)])
def test_multiplicative_boundary(r, eps, k, expected):
    assert level_boundary(Multiplicative(r, eps), k) == pytest.approx(expected)


def test_exact_powers_snap():
    lf = Multiplicative(1.0, 0.1)
    for k in range(200):
        assert lf.level_of(lf.boundary(k)) == k


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    bids = np.exp(rng.uniform(-2, 10, 5000))
    for lf in (Multiplicative(1.0, 1.0), Multiplicative(0.5, 0.2),
               IronedMultiplicative(1.0, 1.0, iron(ModifiedEqualRevenue(4))),
               IronedMultiplicative(1.0, 0.5, iron(ModifiedEqualRevenue(100)))):
        assert lf.levels_of(bids).tolist() == [lf.level_of(b) for b in bids]


def test_ironed_boundaries_modified_er_4():
    lf = IronedMultiplicative(1.0, 1.0, iron(ModifiedEqualRevenue(4)))
    assert [lf.boundary(k) for k in range(4)] == [1.0, 4.0, 8.0, 16.0]
    assert lf.level_of(1.5) == 1
    assert lf.level_of(4.0) == 1
    assert lf.level_of(4.5) == 2


def test_ironed_boundaries_grow_by_at_least_one_plus_eps():
    for n, eps in ((4, 1.0), (64, 0.5), (1024, 0.25)):
        lf = IronedMultiplicative(1.0, eps, iron(ModifiedEqualRevenue(n)))
        b = [lf.boundary(k) for k in range(40)]
        ratios = np.array(b[1:]) / np.array(b[:-1])
        assert np.all(ratios >= 1 + eps - 1e-12)


def test_monotone():
    lf = Multiplicative(1.0, 0.3)
    bids = np.sort(np.exp(np.random.default_rng(2).uniform(-1, 6, 3000)))
    assert np.all(np.diff(lf.levels_of(bids)) >= 0)


def test_round_trip_and_inverse():
    assert props.level_roundtrip_failures() == []


def test_scale_covariance():
    assert props.scale_covariance_failures() == []


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_rejects_nonpositive_bids(bad):
    with pytest.raises(ValueError):
        Multiplicative(1.0, 1.0).level_of(bad)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        Multiplicative(0.0, 1.0)
    with pytest.raises(ValueError):
        Multiplicative(1.0, 0.0)
    with pytest.raises(ValueError):
        Multiplicative(1.0, 1.0).boundary(-1)
