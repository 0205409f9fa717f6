"""Safe-deviation auctioneer policies and the credibility experiments.

The deviation family is parameterized rather than exhaustive: the
auctioneer injects up to three committed fake bids, each shown to a chosen
subset of real bidders, and may abort a fake at a fixed level or at the
level where the observing bidder quits.  Fake values never depend on a
concealed bid, so every bidder's view is an honest ADRA run over some
bidder set.  A sweep over this family is evidence of credibility, not a
proof of it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import Distribution, sample_many
from .fast import NEVER, ON_QUIT, FakeSpec, auctioneer_utility_batch
from .levels import LevelFunction
from .protocol import ABORT, QUIT, RAISE, LevelContext, Participant, Status, ViewResult

MAX_FAKES = 3


@dataclass(frozen=True)
class FakeBid:
    value: float
    abort: int | str | None = None  # level, "on_quit", or None (never)
    visible_to: tuple[int, ...] | None = None

    def spec(self) -> FakeSpec:
        if self.abort is None:
            code = NEVER
        elif self.abort == "on_quit":
            code = ON_QUIT
        else:
            code = int(self.abort)
            if code < 0:
                raise ValueError("abort level must be nonnegative")
        return FakeSpec(float(self.value), code, self.visible_to)

    def label(self) -> str:
        vis = "all" if self.visible_to is None else "+".join(map(str, self.visible_to))
        ab = "never" if self.abort is None else str(self.abort)
        return f"fake({self.value:g},abort={ab},to={vis})"


@dataclass
class FakeBidderStrategy:
    """Auctioneer-scripted seat: bids honestly on ``bid`` until told to abort."""

    bid: float
    abort_at: int | None = None
    watch: int | None = None  # abort once this bidder has quit

    def respond(self, lf: LevelFunction, ctx: LevelContext) -> str:
        if self.abort_at is not None and ctx.level >= self.abort_at:
            return ABORT
        if self.watch is not None and self.watch in ctx.quit_levels:
            return ABORT
        return QUIT if lf.level_of(self.bid) <= ctx.level else RAISE

    def reveal(self) -> float | None:
        return self.bid


@dataclass(frozen=True)
class AuctioneerPolicy:
    kind: str = "honest"  # "honest" or "fake-bids"
    fakes: tuple[FakeBid, ...] = ()

    def __post_init__(self):
        if self.kind not in ("honest", "fake-bids"):
            raise ValueError(f"unknown auctioneer policy {self.kind!r}")
        if len(self.fakes) > MAX_FAKES:
            raise ValueError(f"at most {MAX_FAKES} fake bids")

    @classmethod
    def honest(cls) -> "AuctioneerPolicy":
        return cls()

    @classmethod
    def fake_bids(cls, *fakes: FakeBid) -> "AuctioneerPolicy":
        return cls("fake-bids", tuple(fakes))

    @property
    def is_honest(self) -> bool:
        return self.kind == "honest" or not self.fakes

    def label(self) -> str:
        return "honest" if self.is_honest else " ".join(f.label() for f in self.fakes)

    def fakes_by_view(self, n: int, values=None, lf=None) -> dict[int, list[Participant]]:
        """Fake seats per real bidder; indices start after the real bidders."""
        out: dict[int, list[Participant]] = {}
        for i in range(n):
            seats = []
            for j, f in enumerate(self.fakes):
                if f.visible_to is not None and i not in f.visible_to:
                    continue
                abort_at = f.abort if isinstance(f.abort, int) else None
                watch = i if f.abort == "on_quit" else None
                seats.append(Participant(n + j, f.value, FakeBidderStrategy(f.value, abort_at, watch), fake=True))
            out[i] = seats
        return out

    def specs(self) -> list[FakeSpec]:
        return [f.spec() for f in self.fakes]


# --- statistics helpers ----------------------------------------------------------


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), math.inf
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def draw_values(dist: Distribution, n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    return sample_many(dist, rng, (trials, n))


def utility_samples(policy: AuctioneerPolicy, values: np.ndarray, lf: LevelFunction, reserve: float) -> np.ndarray:
    return auctioneer_utility_batch(values, [] if policy.is_honest else policy.specs(), lf, reserve)


def auctioneer_utility(policy: AuctioneerPolicy, dist: Distribution, n: int, lf: LevelFunction,
                       reserve: float, trials: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo mean auctioneer utility and its standard error."""
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    values = draw_values(dist, n, trials, rng)
    return _mean_se(utility_samples(policy, values, lf, reserve))


# --- sweeps -----------------------------------------------------------------------


def fake_bid_grid(n: int, values: Sequence[float] = (2, 4, 8, 16), abort_levels: Sequence = (0, 1, 2, 3, 4, 5),
                  include_pairs: bool = True) -> list[AuctioneerPolicy]:
    """Single fakes over (value, abort level, on_quit or never, visibility), plus a few multi-fake combos."""
    aborts = list(abort_levels) + ["on_quit", None]
    masks: list[tuple[int, ...] | None] = [None]
    if n >= 2:
        masks += [(i,) for i in range(n)]
    policies = [
        AuctioneerPolicy.fake_bids(FakeBid(float(v), a, m))
        for v in values for a in aborts for m in masks
    ]
    if include_pairs:
        for (v1, v2) in itertools.combinations(values, 2):
            for a in (None, 1):
                policies.append(AuctioneerPolicy.fake_bids(FakeBid(float(v1), a), FakeBid(float(v2), None)))
        if len(values) >= 3:
            policies.append(AuctioneerPolicy.fake_bids(*(FakeBid(float(v)) for v in list(values)[:3])))
    return policies


@dataclass
class PolicyResult:
    label: str
    mean: float
    stderr: float
    diff: float
    diff_stderr: float
    positive_fraction: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CredibilityReport:
    dist: str
    n: int
    trials: int
    honest_mean: float
    honest_stderr: float
    policies: list[PolicyResult] = field(default_factory=list)
    note: str = "bounded deviation family; evidence, not proof"

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.policies)

    def best(self) -> PolicyResult:
        return max(self.policies, key=lambda p: p.diff)

    def to_dict(self) -> dict:
        return {
            "dist": self.dist, "n": self.n, "trials": self.trials,
            "honest_mean": self.honest_mean, "honest_stderr": self.honest_stderr,
            "verdict": "pass" if self.passed else "fail", "note": self.note,
            "policies": [p.to_dict() for p in self.policies],
        }


def credibility_sweep(dist: Distribution, n: int, lf: LevelFunction, reserve: float, trials: int,
                      rng: np.random.Generator, policies: Sequence[AuctioneerPolicy] | None = None,
                      z: float = 2.0) -> CredibilityReport:
    """Compare every policy against honest play on common random values.

    A policy fails when its mean utility exceeds honest by more than ``z``
    standard errors of the paired per-trial difference.
    """
    values = draw_values(dist, n, trials, rng)
    honest = utility_samples(AuctioneerPolicy.honest(), values, lf, reserve)
    hm, hs = _mean_se(honest)
    report = CredibilityReport(dist.name, n, trials, hm, hs)
    for policy in policies if policies is not None else fake_bid_grid(n):
        u = utility_samples(policy, values, lf, reserve)
        m, s = _mean_se(u)
        dm, ds = _mean_se(u - honest)
        report.policies.append(PolicyResult(policy.label(), m, s, dm, ds, float(np.mean(u > 0)),
                                            dm <= z * ds + 1e-12))
    return report


@dataclass
class DominancePair:
    value: float
    late_abort_mean: float
    no_abort_mean: float
    diff: float
    diff_stderr: float
    late_max_utility: float
    passed: bool


def check_abort_dominance(dist: Distribution, n: int, lf: LevelFunction, reserve: float, trials: int,
                          rng: np.random.Generator, fake_values: Sequence[float] = (2, 4, 8, 16),
                          z: float = 2.0) -> dict:
    """Aborting a fake at the observer's quit level never beats keeping it.

    Each pair shares one fake value; one variant aborts it in the level
    where the observing bidder quits, the other never aborts it.
    """
    values = draw_values(dist, n, trials, rng)
    pairs = []
    for v in fake_values:
        late = utility_samples(AuctioneerPolicy.fake_bids(FakeBid(float(v), "on_quit")), values, lf, reserve)
        keep = utility_samples(AuctioneerPolicy.fake_bids(FakeBid(float(v), None)), values, lf, reserve)
        dm, ds = _mean_se(late - keep)
        pairs.append(DominancePair(float(v), float(late.mean()), float(keep.mean()), dm, ds,
                                   float(late.max()), dm <= z * ds + 1e-12))

    # fixed-level aborts: positive utility should only come from aborts before the observer quits
    early_positive = {}
    for v in fake_values:
        for a in range(0, 6):
            policy = AuctioneerPolicy.fake_bids(FakeBid(float(v), a))
            u = utility_samples(policy, values, lf, reserve)
            early_positive[f"{v:g}@{a}"] = float(np.mean(u > 0))
    return {
        "dist": dist.name, "n": n, "trials": trials,
        "pairs": [p.__dict__ for p in pairs],
        "positive_fraction_fixed_aborts": early_positive,
        "verdict": "pass" if all(p.passed for p in pairs) else "fail",
    }


def sealed_spa_noncredibility_demo(dist: Distribution, n: int, trials: int, rng: np.random.Generator) -> dict:
    """One-shot second-price auction where the auctioneer fabricates the runner-up bid.

    The liar reports a second bid equal to the winner's bid, so the winner
    pays its own bid.  The gap against honest revenue is the contrast that
    shows the sweep machinery can detect a profitable lie.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    values = draw_values(dist, n, trials, rng)
    part = np.partition(values, n - 2, axis=1)
    honest = part[:, n - 2]
    liar = part[:, n - 1]
    hm, hs = _mean_se(honest)
    lm, ls = _mean_se(liar)
    gm, gs = _mean_se(liar - honest)
    sigmas = gm / gs if gs > 0 else math.inf
    return {
        "dist": dist.name, "n": n, "trials": trials,
        "honest_mean": hm, "honest_stderr": hs,
        "liar_mean": lm, "liar_stderr": ls,
        "gap": gm, "gap_stderr": gs, "gap_sigmas": sigmas,
        "verdict": "pass" if sigmas >= 5 else "fail",
    }


# --- view validation ---------------------------------------------------------------


def validate_view(view: ViewResult, lf: LevelFunction, reserve: float) -> list[str]:
    """Problems that would let a bidder tell this view from an honest run (empty if none)."""
    problems: list[str] = []
    k0 = lf.level_of(reserve)
    per_bidder: dict[int, list] = {}
    for m in view.transcript.messages:
        per_bidder.setdefault(m.bidder, []).append(m)
    exits_at: dict[int, float] = {}
    for s in view.states:
        msgs = per_bidder.get(s.index, [])
        kinds = [m.kind for m in msgs]
        if not kinds or kinds[0] != "commit":
            problems.append(f"bidder {s.index}: first message is not a commit")
            continue
        loop = [m for m in msgs if m.level is not None]
        levels = [m.level for m in loop]
        if levels and levels != list(range(k0, k0 + len(levels))):
            problems.append(f"bidder {s.index}: non-consecutive levels {levels}")
        exits = [m for m in loop if m.kind in ("quit", "abort")]
        if len(exits) > 1 or (exits and exits[0] is not loop[-1]):
            problems.append(f"bidder {s.index}: exchanges after leaving the loop")
        exits_at[s.index] = exits[0].level if exits else math.inf
        if s.status is Status.QUIT and s.revealed is not None:
            if s.at_level != max(k0, lf.level_of(s.revealed)):
                problems.append(f"bidder {s.index}: quit level does not match revealed bid")
        if s.status is not Status.ABORTED and kinds[-1] != "forward_reveals":
            problems.append(f"bidder {s.index}: missing forwarded reveals")
    if view.loop_ran:
        # the loop continues exactly while two or more seats remain after a level
        for k in range(k0, view.terminal_level + 1):
            remaining = sum(1 for lv in exits_at.values() if lv > k)
            if (k < view.terminal_level) != (remaining >= 2):
                problems.append(f"level {k}: {remaining} seats remain but the loop "
                                f"{'stopped' if k == view.terminal_level else 'continued'}")
    return problems
