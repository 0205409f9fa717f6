"""Auction engines: ADRA, the ascending price auction and non-i.i.d. ironed ADRA.

Each engine is a sequential, message-driven state machine.  Every
request/response pair with a bidder, and every one-way delivery of the
forwarded reveals, is one transcript record and counts once towards that
bidder's message total.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import commitments as cm
from .distributions import Distribution, IronedStructure, ironed_inverse, iron, sample_many
from .levels import LevelFunction

RAISE = "raise"
QUIT = "quit"
ABORT = "abort"


class Status(Enum):
    ACTIVE = "active"
    QUIT = "quit"
    ABORTED = "aborted"


# --- transcripts ---------------------------------------------------------------


@dataclass(frozen=True)
class Message:
    round: int
    bidder: int
    direction: str  # "exchange" (request + response) or "deliver" (one-way)
    kind: str
    level: int | None = None


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)
    totals: Counter = field(default_factory=Counter)

    def log(self, round_: int, bidder: int, kind: str, level: int | None = None, direction: str = "exchange"):
        self.messages.append(Message(round_, bidder, direction, kind, level))
        self.totals[bidder] += 1

    def max_messages(self) -> int:
        return max(self.totals.values(), default=0)

    def for_bidder(self, i: int) -> list[Message]:
        return [m for m in self.messages if m.bidder == i]

    def records(self, trial: int = 0) -> list[dict]:
        return [
            {"trial": trial, "round": m.round, "bidder": m.bidder, "direction": m.direction,
             "kind": m.kind, "level": m.level}
            for m in self.messages
        ]


@dataclass
class AuctionOutcome:
    winner: int | None
    payment: float
    fines_to_winner: float
    deposits_returned: dict[int, float]
    revenue: float
    auctioneer_utility: float
    second_highest: float
    terminal_level: int
    auctioneer_fines: float = 0.0
    unclaimed_deposits: float = 0.0
    collected_deposits: float = 0.0
    statuses: dict[int, str] = field(default_factory=dict)
    max_messages: int = 0

    def to_dict(self) -> dict:
        return {
            "winner": self.winner,
            "payment": self.payment,
            "fines_to_winner": self.fines_to_winner,
            "deposits_returned": {str(k): v for k, v in sorted(self.deposits_returned.items())},
            "revenue": self.revenue,
            "auctioneer_utility": self.auctioneer_utility,
            "second_highest": self.second_highest,
            "terminal_level": self.terminal_level,
            "auctioneer_fines": self.auctioneer_fines,
            "unclaimed_deposits": self.unclaimed_deposits,
            "collected_deposits": self.collected_deposits,
            "statuses": {str(k): v for k, v in sorted(self.statuses.items())},
            "max_messages": self.max_messages,
        }


# --- bidder strategies ------------------------------------------------------------


@dataclass
class LevelContext:
    """What a participant may observe while the level loop runs."""

    level: int
    quit_levels: dict[int, int]


@dataclass
class HonestStrategy:
    """Commit to ``bid``, quit at the first level k with g(bid) <= k, reveal on request."""

    bid: float

    def respond(self, lf: LevelFunction, ctx: LevelContext) -> str:
        return QUIT if lf.level_of(self.bid) <= ctx.level else RAISE

    def reveal(self) -> float | None:
        return self.bid


@dataclass
class DeviantStrategy:
    """Commits to ``bid`` but may quit at the wrong level, abort, or misreveal."""

    bid: float
    quit_at: int | None = None
    abort_at: int | None = None
    refuse_reveal: bool = False
    reveal_bid: float | None = None

    def respond(self, lf: LevelFunction, ctx: LevelContext) -> str:
        if self.abort_at is not None and ctx.level >= self.abort_at:
            return ABORT
        if self.quit_at is not None:
            return QUIT if ctx.level >= self.quit_at else RAISE
        return QUIT if lf.level_of(self.bid) <= ctx.level else RAISE

    def reveal(self) -> float | None:
        if self.refuse_reveal:
            return None
        return self.bid if self.reveal_bid is None else self.reveal_bid


def honest_bidder_strategy(b: float) -> HonestStrategy:
    return HonestStrategy(b)


# --- ADRA ------------------------------------------------------------------------


@dataclass
class BidderState:
    index: int
    true_value: float
    committed_bid: float
    nonce: bytes
    commitment: cm.Commitment
    deposit: float
    status: Status = Status.ACTIVE
    at_level: int | None = None
    raised_at: list[int] = field(default_factory=list)
    messages_exchanged: int = 0
    revealed: float | None = None

    def leave(self, status: Status, level: int) -> None:
        if self.status is not Status.ACTIVE:
            raise RuntimeError(f"bidder {self.index} already {self.status.value}")
        self.status = status
        self.at_level = level


@dataclass
class Participant:
    """One seat in a bidder's view: a real bidder or an auctioneer-controlled fake."""

    index: int
    value: float
    strategy: object
    fake: bool = False


@dataclass
class ViewResult:
    states: list[BidderState]
    winner: int | None
    payment: float
    fines_to_winner: float
    unclaimed: float
    terminal_level: int
    transcript: Transcript
    loop_ran: bool


def run_view(participants: Sequence[Participant], lf: LevelFunction, reserve: float,
             rng: np.random.Generator | None = None, round_offset: int = 0) -> ViewResult:
    """Run one honest ADRA execution over ``participants`` (ascending index order)."""
    if not reserve > 0:
        raise ValueError("reserve must be positive")
    reserve = float(reserve)
    transcript = Transcript()
    k0 = lf.level_of(reserve)

    # commit phase; forwarding the commitments is batched with the commit exchange
    states: list[BidderState] = []
    for p in participants:
        nonce = cm.fresh_nonce(rng)
        c = cm.commit(cm.encode_bid(p.strategy.bid), nonce)
        states.append(BidderState(p.index, p.value, p.strategy.bid, nonce, c, deposit=reserve))
        transcript.log(round_offset, p.index, "commit")

    # level loop
    k = k0
    rnd = round_offset + 1
    active = [s for s in states]
    quit_levels: dict[int, int] = {}
    loop_ran = False
    last_level = k0
    while len(active) >= 2:
        loop_ran = True
        last_level = k
        for s, p in zip(states, participants):
            if s.status is not Status.ACTIVE:
                continue
            action = p.strategy.respond(lf, LevelContext(k, quit_levels))
            if action == ABORT:
                transcript.log(rnd, s.index, "abort", k)
                s.leave(Status.ABORTED, k)
            elif action == QUIT:
                transcript.log(rnd, s.index, "quit", k)
                s.leave(Status.QUIT, k)
                quit_levels[s.index] = k
            else:
                transcript.log(rnd, s.index, "raise", k)
                s.raised_at.append(k)
                s.deposit = lf.boundary(k + 1)
        active = [s for s in states if s.status is Status.ACTIVE]
        k += 1
        rnd += 1
    terminal = last_level

    # reveal, then forward the reveals
    reveal_round = rnd
    for s, p in zip(states, participants):
        if s.status is Status.ABORTED:
            continue
        b = p.strategy.reveal()
        transcript.log(reveal_round, s.index, "reveal")
        if b is None:
            _force_abort(s, terminal)
            continue
        # the commitment must open to the revealed bid
        if not cm.verify(s.commitment, cm.encode_bid(b), s.nonce):
            _force_abort(s, terminal)
            continue
        s.revealed = b
        # the bidder must have quit exactly at the first level >= g(b)
        if loop_ran and not _consistent(s, lf.level_of(b) if b > 0 else 0, k0):
            _force_abort(s, terminal)
    for s in states:
        if s.status is not Status.ABORTED:
            transcript.log(reveal_round + 1, s.index, "forward_reveals", direction="deliver")

    # allocation and payment over the non-aborted set
    alive = [s for s in states if s.status is not Status.ABORTED]
    eligible = [s for s in alive if s.revealed is not None and s.revealed >= reserve]
    winner = None
    payment = 0.0
    if eligible:
        top = max(s.revealed for s in eligible)
        win = min((s for s in eligible if s.revealed == top), key=lambda s: s.index)
        winner = win.index
        others = [s.revealed for s in alive if s is not win]
        payment = max([reserve] + others)

    # deposits
    forfeited = sum(s.deposit for s in states if s.status is Status.ABORTED)
    fines = forfeited if winner is not None else 0.0
    unclaimed = 0.0 if winner is not None else forfeited
    for s in states:
        s.messages_exchanged = transcript.totals[s.index]
    return ViewResult(states, winner, payment, fines, unclaimed, terminal, transcript, loop_ran)


def _force_abort(s: BidderState, level: int) -> None:
    # a bidder caught at reveal time forfeits whatever deposit it holds
    s.status = Status.ABORTED
    if s.at_level is None:
        s.at_level = level


def _consistent(s: BidderState, g_b: int, k0: int) -> bool:
    expected_quit = max(k0, g_b)
    if s.status is Status.QUIT:
        return s.at_level == expected_quit
    # survivor: every level it raised at must sit strictly below g(b)
    return all(level < g_b for level in s.raised_at)


def run_adra(values: Sequence[float], lf: LevelFunction, reserve: float, strategies=None,
             auctioneer=None, rng: np.random.Generator | None = None):
    """ADRA over real bidders with ``values``.

    ``strategies`` defaults to truthful bidding with the honest strategy.  ``auctioneer`` is an
    :class:`~adra.adversary.AuctioneerPolicy`; ``None`` means honest.
    Returns ``(AuctionOutcome, Transcript, views)`` where ``views`` maps each
    real bidder to the execution it observed.
    """
    n = len(values)
    if n < 1:
        raise ValueError("need at least one bidder")
    if strategies is None:
        strategies = [HonestStrategy(v) for v in values]
    reals = [Participant(i, float(v), s) for i, (v, s) in enumerate(zip(values, strategies))]

    fake_views = None if auctioneer is None else auctioneer.fakes_by_view(n, values, lf)
    if not fake_views or not any(fake_views.values()):
        view = run_view(reals, lf, reserve, rng)
        outcome = _honest_outcome(view, values, reserve)
        return outcome, view.transcript, {i: view for i in range(n)}

    views: dict[int, ViewResult] = {}
    for i in range(n):
        views[i] = run_view(reals + list(fake_views.get(i, [])), lf, reserve, rng)
    return _combine_views(views, values, reserve)


def _second_highest(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return sorted(values)[-2]


def _honest_outcome(view: ViewResult, values, reserve) -> AuctionOutcome:
    returned = {s.index: s.deposit for s in view.states if s.status is not Status.ABORTED}
    collected = sum(s.deposit for s in view.states)
    return AuctionOutcome(
        winner=view.winner,
        payment=view.payment,
        fines_to_winner=view.fines_to_winner,
        deposits_returned=returned,
        revenue=view.payment,
        auctioneer_utility=view.payment + view.unclaimed,
        second_highest=_second_highest(values),
        terminal_level=view.terminal_level,
        unclaimed_deposits=view.unclaimed,
        collected_deposits=collected,
        statuses={s.index: s.status.value for s in view.states},
        max_messages=view.transcript.max_messages(),
    )


def _combine_views(views: dict[int, ViewResult], values, reserve):
    n = len(values)
    transcript = Transcript()
    for i, view in views.items():
        for m in view.transcript.for_bidder(i):
            transcript.log(m.round, m.bidder, m.kind, m.level, m.direction)

    real_winners = [i for i in range(n) if views[i].winner == i]
    winner = real_winners[0] if real_winners else None
    payment = fines = auctioneer_fines = 0.0
    returned: dict[int, float] = {}
    if winner is not None:
        wv = views[winner]
        payment = wv.payment
        fines = wv.fines_to_winner
        auctioneer_fines = sum(s.deposit for s in wv.states if s.index >= n and s.status is Status.ABORTED)
    for i in range(n):
        s = views[i].states[i]
        if s.status is not Status.ABORTED:
            returned[i] = s.deposit
    outcome = AuctionOutcome(
        winner=winner,
        payment=payment,
        fines_to_winner=fines,
        deposits_returned=returned,
        revenue=payment,
        auctioneer_utility=payment - auctioneer_fines,
        second_highest=_second_highest(values),
        terminal_level=max(v.terminal_level for v in views.values()),
        auctioneer_fines=auctioneer_fines,
        collected_deposits=sum(views[i].states[i].deposit for i in range(n)),
        statuses={i: views[i].states[i].status.value for i in range(n)},
        max_messages=transcript.max_messages(),
    )
    return outcome, transcript, views


def simulate_adra(dist: Distribution, n: int, lf: LevelFunction, reserve: float,
                  rng: np.random.Generator, strategies=None, auctioneer=None):
    """Draw ``n`` i.i.d. values from ``dist`` and run ADRA on them."""
    values = sample_many(dist, rng, n)
    return run_adra(list(values), lf, reserve, strategies, auctioneer, rng)


# --- ascending price auction -----------------------------------------------------------


def run_apa(values: Sequence[float], reserve: float, eps: float, record: bool = True):
    """Ascending price auction with additive step ``eps``.

    Bidders quit when asked to bid above their value.  The auctioneer always
    visits the lowest standing bid (ties to the lowest index).
    """
    if not eps > 0:
        raise ValueError("step eps must be positive")
    n = len(values)
    reserve = float(reserve)
    transcript = Transcript()
    steps = [0] * n  # bid of bidder i is reserve + steps[i] * eps
    heap: list[tuple[float, int]] = []
    for i, v in enumerate(values):
        if record:
            transcript.log(0, i, "bid" if v >= reserve else "quit")
        else:
            transcript.totals[i] += 1
        if v >= reserve:
            heap.append((reserve, i))
    heapq.heapify(heap)
    while len(heap) >= 2:
        bid, i = heapq.heappop(heap)
        # round k is the request to move up to reserve + k * eps
        rnd = steps[i] + 1
        offer = reserve + rnd * eps
        if offer <= values[i]:
            steps[i] += 1
            heapq.heappush(heap, (offer, i))
            kind = "raise"
        else:
            kind = "quit"
        if record:
            transcript.log(rnd, i, kind, level=steps[i])
        else:
            transcript.totals[i] += 1
    if heap:
        bid, winner = heap[0]
        payment = bid
    else:
        winner, payment = None, 0.0
    outcome = AuctionOutcome(
        winner=winner,
        payment=payment,
        fines_to_winner=0.0,
        deposits_returned={},
        revenue=payment,
        auctioneer_utility=payment,
        second_highest=_second_highest(values),
        terminal_level=max(steps, default=0),
        max_messages=transcript.max_messages(),
    )
    return outcome, transcript


def simulate_apa(dist: Distribution, n: int, reserve: float, eps: float, rng: np.random.Generator,
                 record: bool = True):
    values = sample_many(dist, rng, n)
    return run_apa(list(values), reserve, eps, record)


# --- non-i.i.d. ironed ADRA -----------------------------------------------------------


@dataclass(frozen=True)
class NonIidLevelSchedule:
    """Virtual-value level upper bounds phi(k), phi(0) = 0, and per-level fines."""

    phi: tuple[float, ...]
    fine: tuple[float, ...]
    ironings: tuple[IronedStructure, ...] = field(repr=False)
    supports: tuple[tuple[float, float], ...] = field(repr=False)

    def level_of(self, j: int, b: float) -> int:
        """Smallest k with ironed_virtual_j(b) <= phi(k)."""
        v = self.ironings[j].ironed_virtual(b)
        for k, edge in enumerate(self.phi):
            if v <= edge + 1e-12:
                return k
        return len(self.phi)


def _inverse(ironing: IronedStructure, support: tuple[float, float], y: float) -> float:
    lo, hi = support
    if not math.isfinite(hi):
        hi = max(1.0, lo) * 2.0
        while ironing.ironed_virtual(hi) <= y:
            hi *= 2.0
            if hi > 1e300:
                return math.inf
    return ironed_inverse(ironing, y, lo, hi)


def build_noniid_schedule(dists: Sequence[Distribution], eps: float, levels: int = 64,
                          grid_resolution: int = 4096) -> NonIidLevelSchedule:
    """phi(k+1) = max_j ironed_j((1 + eps) * ironed_j^{-1}(phi(k))), Fine(k) = max_j ironed_j^{-1}(phi(k))."""
    if not eps > 0:
        raise ValueError("step eps must be positive")
    ironings = tuple(iron(d, grid_resolution) for d in dists)
    supports = tuple((d.lower, d.upper) for d in dists)
    phi = [0.0]
    fine = []
    for _ in range(levels):
        inv = [_inverse(ir, sp, phi[-1]) for ir, sp in zip(ironings, supports)]
        if any(math.isinf(x) for x in inv):
            raise ValueError("ironed virtual value is flat to infinity; no finite level schedule")
        fine.append(max(inv))
        nxt = max(ir.ironed_virtual(min((1.0 + eps) * x, sp[1])) for ir, sp, x in zip(ironings, supports, inv))
        if nxt <= phi[-1]:
            break  # every bounded support is exhausted
        phi.append(nxt)
    if len(fine) < len(phi):
        fine.append(max(_inverse(ir, sp, phi[-1]) for ir, sp in zip(ironings, supports)))
    return NonIidLevelSchedule(tuple(phi), tuple(fine), ironings, supports)


def _myerson_winner(bids: dict[int, float], schedule: NonIidLevelSchedule):
    """Highest nonnegative ironed virtual value wins (ties to the lowest index)."""
    scores = {j: schedule.ironings[j].ironed_virtual(b) for j, b in bids.items()}
    best = None
    for j in sorted(scores):
        if scores[j] >= 0 and (best is None or scores[j] > scores[best]):
            best = j
    return best, scores


def _threshold_payment(i: int, bids: dict[int, float], schedule: NonIidLevelSchedule, tol: float = 1e-9) -> float:
    """Smallest bid with which ``i`` still wins, by bisection."""
    others = {j: b for j, b in bids.items() if j != i}

    def wins(x: float) -> bool:
        w, _ = _myerson_winner({**others, i: x}, schedule)
        return w == i

    lo, hi = schedule.supports[i][0], bids[i]
    if wins(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if wins(mid):
            hi = mid
        else:
            lo = mid
    return hi


def run_noniid_adra(values: Sequence[float], schedule: NonIidLevelSchedule, strategies=None,
                    auctioneer=None, rng: np.random.Generator | None = None):
    """Non-i.i.d. ironed ADRA on fixed ``values`` (bidder j uses schedule ironing j)."""
    if auctioneer is not None and not getattr(auctioneer, "is_honest", False):
        raise ValueError("non-i.i.d. ADRA only simulates an honest auctioneer")
    n = len(values)
    if n != len(schedule.ironings):
        raise ValueError("one value per scheduled distribution is required")
    bids = [float(v) for v in values] if strategies is None else [s.bid for s in strategies]
    transcript = Transcript()
    nonces = [cm.fresh_nonce(rng) for _ in range(n)]
    coms = [cm.commit(cm.encode_bid(b), r) for b, r in zip(bids, nonces)]
    for j in range(n):
        transcript.log(0, j, "commit")

    level_of = [schedule.level_of(j, b) for j, b in enumerate(bids)]
    quit_at: dict[int, int] = {}
    active = list(range(n))
    aborted: set[int] = set()
    k = 0
    rnd = 1
    while len(active) > 1:
        for j in list(active):
            s = None if strategies is None else strategies[j]
            if s is not None and getattr(s, "abort_at", None) is not None and k >= s.abort_at:
                transcript.log(rnd, j, "abort", k)
                active.remove(j)
                aborted.add(j)
                quit_at[j] = k
                continue
            says_yes = (level_of[j] <= k) if s is None or getattr(s, "quit_at", None) is None else k >= s.quit_at
            transcript.log(rnd, j, "quit" if says_yes else "raise", k)
            if says_yes:
                active.remove(j)
                quit_at[j] = k
        k += 1
        rnd += 1
    k_star = k - 1
    revealers = sorted([j for j, q in quit_at.items() if q == k_star and j not in aborted] + active)

    revealed: dict[int, float] = {}
    for j in revealers:
        transcript.log(rnd, j, "reveal")
        s = None if strategies is None else strategies[j]
        b = bids[j] if s is None else s.reveal()
        ok = b is not None and cm.verify(coms[j], cm.encode_bid(b), nonces[j])
        if ok and k_star >= 0:
            expected = schedule.level_of(j, b)
            ok = (quit_at.get(j) == expected) if j in quit_at else expected > k_star
        if ok:
            revealed[j] = b
        else:
            aborted.add(j)
    for j in revealers:
        if j not in aborted:
            transcript.log(rnd + 1, j, "forward_reveals", direction="deliver")

    winner, _ = _myerson_winner(revealed, schedule)
    payment = _threshold_payment(winner, revealed, schedule) if winner is not None else 0.0
    penalty = schedule.fine[max(k_star, 0)] if k_star < len(schedule.fine) else schedule.fine[-1]
    fines = penalty * len(aborted) if winner is not None else 0.0
    outcome = AuctionOutcome(
        winner=winner,
        payment=payment,
        fines_to_winner=fines,
        deposits_returned={},
        revenue=payment,
        auctioneer_utility=payment,
        second_highest=_second_highest(bids),
        terminal_level=max(k_star, 0),
        statuses={j: ("aborted" if j in aborted else "quit" if j in quit_at else "active") for j in range(n)},
        max_messages=transcript.max_messages(),
    )
    return outcome, transcript


def simulate_noniid_adra(dists: Sequence[Distribution], schedule: NonIidLevelSchedule,
                         rng: np.random.Generator, auctioneer=None):
    values = [float(sample_many(d, rng, 1)[0]) for d in dists]
    return run_noniid_adra(values, schedule, None, auctioneer, rng)
