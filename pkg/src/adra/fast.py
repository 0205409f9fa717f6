"""Vectorized closed-form ADRA outcomes for Monte Carlo work.

The message engine in :mod:`adra.protocol` is the reference.  These
functions reproduce its outcome trial by trial for the cases the
experiments need (all-honest bidders, optionally with scripted fake bids in
each bidder's view) so that large sweeps stay cheap.  The test suite checks
the equivalence on random profiles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .levels import LevelFunction

NEVER = -1  # abort code: fake never aborts
ON_QUIT = -2  # abort code: fake aborts in the level where the view owner quits


@dataclass
class HonestBatch:
    terminal_level: np.ndarray
    max_messages: np.ndarray
    revenue: np.ndarray
    sold: np.ndarray


def honest_adra_from_top_two(top: np.ndarray, second: np.ndarray | None, n: int,
                             lf: LevelFunction, reserve: float) -> HonestBatch:
    """Outcome of all-honest ADRA from the two highest values of each trial."""
    top = np.asarray(top, dtype=float)
    k0 = lf.level_of(reserve)
    sold = top >= reserve
    if n == 1:
        terminal = np.full(top.shape, k0, dtype=np.int64)
        # commit, reveal, forwarded reveals
        messages = np.full(top.shape, 3, dtype=np.int64)
        revenue = np.where(sold, reserve, 0.0)
        return HonestBatch(terminal, messages, revenue, sold)
    second = np.asarray(second, dtype=float)
    terminal = np.maximum(lf.levels_of(second), k0)
    # the top bidder answers every level k0..terminal, plus commit, reveal, forward
    messages = terminal - k0 + 4
    revenue = np.where(sold, np.maximum(second, reserve), 0.0)
    return HonestBatch(terminal, messages, revenue, sold)


def honest_adra_from_values(values: np.ndarray, lf: LevelFunction, reserve: float) -> HonestBatch:
    """Same as :func:`honest_adra_from_top_two` for a (trials, n) value matrix."""
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    if n == 1:
        return honest_adra_from_top_two(values[:, 0], None, 1, lf, reserve)
    part = np.partition(values, n - 2, axis=1)
    return honest_adra_from_top_two(part[:, n - 1], part[:, n - 2], n, lf, reserve)


@dataclass
class FakeSpec:
    value: float
    abort: int  # level >= 0, NEVER or ON_QUIT
    visible_to: tuple[int, ...] | None = None  # None: every real bidder

    def visible(self, i: int) -> bool:
        return self.visible_to is None or i in self.visible_to


@dataclass
class ViewBatch:
    owner_wins: np.ndarray
    payment: np.ndarray
    auctioneer_fines: np.ndarray
    terminal_level: np.ndarray
    owner_messages: np.ndarray
    owner_quit_level: np.ndarray


def _second_largest(a: np.ndarray) -> np.ndarray:
    m = a.shape[1]
    return np.partition(a, m - 2, axis=1)[:, m - 2]


def evaluate_view(values: np.ndarray, owner: int, fakes: Sequence[FakeSpec],
                  lf: LevelFunction, reserve: float) -> ViewBatch:
    """Bidder ``owner``'s view: honest reals plus the fakes visible to it.

    Participants are ordered reals first (by index), then fakes, which is the
    processing order inside a level and the allocation tie-break.
    """
    values = np.asarray(values, dtype=float)
    trials, n = values.shape
    k0 = lf.level_of(reserve)
    fakes = [f for f in fakes if f.visible(owner)]
    m = n + len(fakes)

    bids = np.empty((trials, m))
    bids[:, :n] = values
    natural = np.empty((trials, m), dtype=np.int64)
    natural[:, :n] = np.maximum(lf.levels_of(values), k0)
    for j, f in enumerate(fakes):
        bids[:, n + j] = f.value
        natural[:, n + j] = max(lf.level_of(f.value), k0)

    # planned leave level and whether that leave is an abort
    leave = natural.copy()
    aborts = np.zeros((trials, m), dtype=bool)
    owner_q = natural[:, owner]
    for j, f in enumerate(fakes):
        col = n + j
        if f.abort == NEVER:
            continue
        at = owner_q if f.abort == ON_QUIT else np.full(trials, max(f.abort, k0))
        hit = at <= natural[:, col]
        leave[:, col] = np.where(hit, at, natural[:, col])
        aborts[:, col] = hit

    if m >= 2:
        terminal = _second_largest(leave)
        # only leaves at or before the last level actually happen
        left = leave <= terminal[:, None]
        aborted = aborts & left
        owner_last = np.minimum(leave[:, owner], terminal)
        loop_levels = owner_last - k0 + 1
    else:
        terminal = np.full(trials, k0, dtype=np.int64)
        aborted = np.zeros((trials, m), dtype=bool)
        loop_levels = np.zeros(trials, dtype=np.int64)

    alive_bids = np.where(aborted, -np.inf, bids)
    eligible = np.where(alive_bids >= reserve, alive_bids, -np.inf)
    # argmax returns the first maximum: lowest index wins ties
    win = np.argmax(eligible, axis=1)
    has_winner = np.isfinite(eligible[np.arange(trials), win])
    owner_wins = has_winner & (win == owner)
    others = alive_bids.copy()
    others[:, owner] = -np.inf
    payment = np.where(owner_wins, np.maximum(reserve, others.max(axis=1)), 0.0)

    fines = np.zeros(trials)
    for j in range(len(fakes)):
        col = n + j
        deposit = np.array([lf.boundary(int(k)) for k in range(int(leave[:, col].max()) + 1)])
        fines += np.where(aborted[:, col], deposit[leave[:, col]], 0.0)
    fines = np.where(owner_wins, fines, 0.0)

    messages = loop_levels + 3  # commit, reveal, forwarded reveals
    return ViewBatch(owner_wins, payment, fines, terminal, messages, owner_q)


def auctioneer_utility_batch(values: np.ndarray, fakes: Sequence[FakeSpec], lf: LevelFunction,
                             reserve: float) -> np.ndarray:
    """Per-trial auctioneer utility: payment from the real winner minus fines for its aborted fakes."""
    values = np.asarray(values, dtype=float)
    trials, n = values.shape
    utility = np.zeros(trials)
    claimed = np.zeros(trials, dtype=bool)
    for i in range(n):
        view = evaluate_view(values, i, fakes, lf, reserve)
        take = view.owner_wins & ~claimed
        utility += np.where(take, view.payment - view.auctioneer_fines, 0.0)
        claimed |= view.owner_wins
    return utility
