import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from adra import commitments as cm
from adra.distributions import ModifiedEqualRevenue, iron
from adra.fast import honest_adra_from_values
from adra.levels import IronedMultiplicative, Multiplicative
from adra.protocol import DeviantStrategy, HonestStrategy, run_adra, run_apa

bids = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False, allow_infinity=False)
reserves = st.floats(min_value=1e-2, max_value=100.0)
steps = st.floats(min_value=1e-2, max_value=10.0)
values = st.lists(st.floats(min_value=0.1, max_value=1e4), min_size=1, max_size=6)


@given(bids, reserves, steps)
def test_boundary_brackets_bid(b, r, eps):
    lf = Multiplicative(r, eps)
    k = lf.level_of(b)
    assert b <= lf.boundary(k) * (1 + 1e-12)
    if k >= 1:
        assert lf.boundary(k - 1) < b * (1 + 1e-12)


@given(bids, bids, reserves, steps)
def test_level_monotone(b1, b2, r, eps):
    lf = Multiplicative(r, eps)
    lo, hi = sorted((b1, b2))
    assert lf.level_of(lo) <= lf.level_of(hi)


@given(bids, reserves, steps, st.sampled_from([2.0, 10.0]))
def test_scale_covariance(b, r, eps, c):
    assert Multiplicative(r, eps).level_of(b) == Multiplicative(c * r, eps).level_of(c * b)


@given(st.integers(min_value=2, max_value=500), steps, bids)
def test_ironed_levels_bracket(n, eps, b):
    lf = IronedMultiplicative(1.0, eps, iron(ModifiedEqualRevenue(n)))
    k = lf.level_of(b)
    assert b <= lf.boundary(k) * (1 + 1e-12)
    if k >= 1:
        assert lf.boundary(k - 1) < b
        assert lf.boundary(k) / lf.boundary(k - 1) >= 1 + eps - 1e-12


@given(st.binary(max_size=64), st.binary(min_size=32, max_size=32), st.integers(min_value=0, max_value=255))
def test_commitment_binding(msg, nonce, bit):
    c = cm.commit(msg, nonce)
    assert cm.verify(c, msg, nonce)
    flipped = bytearray(nonce)
    flipped[bit // 8] ^= 1 << (bit % 8)
    assert not cm.verify(c, msg, bytes(flipped))
    assert not cm.verify(c, msg + b"\x00", nonce)


@given(st.floats(min_value=0, max_value=1e6), st.floats(min_value=0, max_value=1e6))
def test_bid_encoding_round_trips_and_separates(a, b):
    ea, eb = cm.encode_bid(a), cm.encode_bid(b)
    assert abs(float(ea.decode()) - a) <= 5e-13 + 1e-15 * a
    if abs(a - b) > 2e-12:
        assert ea != eb


@settings(max_examples=150, deadline=None)
@given(values, reserves.filter(lambda r: r <= 50), steps)
def test_honest_adra_is_second_price_and_abort_free(vals, r, eps):
    lf = Multiplicative(r, eps)
    outcome, tr, _ = run_adra(vals, lf, r)
    assert "aborted" not in outcome.statuses.values()
    ordered = sorted(vals)
    if ordered[-1] >= r:
        assert vals[outcome.winner] == ordered[-1]
        expected = max(r, ordered[-2]) if len(vals) > 1 else r
        assert math.isclose(outcome.payment, expected)
    else:
        assert outcome.winner is None
    assert tr.max_messages() >= 2
    batch = honest_adra_from_values(np.array([vals]), lf, r)
    assert batch.max_messages[0] == tr.max_messages()
    assert batch.terminal_level[0] == outcome.terminal_level


@settings(max_examples=150, deadline=None)
@given(values, st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5)), min_size=6, max_size=6))
def test_deposits_balance_under_deviations(vals, plan):
    lf = Multiplicative(1.0, 1.0)
    strategies = []
    for v, (mode, lvl) in zip(vals, plan):
        strategies.append([HonestStrategy(v), DeviantStrategy(v, abort_at=lvl),
                           DeviantStrategy(v, quit_at=lvl), DeviantStrategy(v, refuse_reveal=True)][mode])
    outcome, _, _ = run_adra(vals, lf, 1.0, strategies)
    forfeited = outcome.collected_deposits - sum(outcome.deposits_returned.values())
    assert math.isclose(forfeited, outcome.fines_to_winner + outcome.unclaimed_deposits, abs_tol=1e-9)
    if outcome.winner is not None:
        assert outcome.payment >= 1.0
        assert outcome.statuses[outcome.winner] != "aborted"


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(min_value=0.5, max_value=30.0), min_size=1, max_size=5), st.floats(0.1, 2.0))
def test_apa_winner_and_price(vals, eps):
    outcome, _ = run_apa(vals, 1.0, eps)
    ordered = sorted(vals)
    if ordered[-1] < 1.0:
        assert outcome.winner is None
        return
    assert vals[outcome.winner] >= (ordered[-2] if len(vals) > 1 else 1.0) - eps
    assert outcome.payment <= vals[outcome.winner] + 1e-9
    if len(vals) > 1 and ordered[-2] >= 1.0:
        assert ordered[-2] - eps - 1e-9 <= outcome.payment
