"""Monte Carlo drivers and the round-complexity scaling checks.

Trials are split into fixed-size chunks; chunk ``c`` of cell ``key`` draws
from ``SeedSequence(seed, spawn_key=(*key, c))`` so results do not depend on
how chunks are scheduled.  Statistics are accumulated in a single pass.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .distributions import (
    Distribution,
    ModifiedEqualRevenue,
    iron,
    make_distribution,
    myerson_reserve,
    sample_many,
    sample_top_two,
    threshold_x,
)
from .fast import honest_adra_from_top_two
from .levels import IronedMultiplicative, LevelFunction, Multiplicative
from .protocol import build_noniid_schedule, run_apa, run_noniid_adra

log = logging.getLogger(__name__)

CHUNK = 10_000
PROTOCOLS = ("adra", "apa", "ironed_adra", "noniid_adra")
SIGMAS = 3.0


class ConfigError(ValueError):
    pass


# --- streaming statistics -----------------------------------------------------------


@dataclass
class RunningStats:
    """Single-pass mean/variance (Welford, with Chan's merge for batches)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def extend(self, xs) -> None:
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return
        self.merge(RunningStats(int(xs.size), float(xs.mean()), float(((xs - xs.mean()) ** 2).sum())))

    def merge(self, other: "RunningStats") -> None:
        if other.count == 0:
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 0 else math.inf


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _key(text: str) -> int:
    return zlib.crc32(text.encode())


# --- configuration -------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    protocol: str = "adra"
    dist: str = "equal-revenue"
    dist_params: dict = field(default_factory=dict)
    n_sweep: list[int] = field(default_factory=lambda: [2])
    eps: float = 1.0
    reserve: str | float = "myerson"
    trials: int = 1000
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.trials < 100:
            raise ConfigError("trials must be >= 100")
        if not self.n_sweep or any(b <= a for a, b in zip(self.n_sweep, self.n_sweep[1:])):
            raise ConfigError("n_sweep must be nonempty and strictly increasing")
        if any(n < 1 for n in self.n_sweep):
            raise ConfigError("every n must be >= 1")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.reserve != "myerson":
            try:
                self.reserve = float(self.reserve)
            except (TypeError, ValueError):
                raise ConfigError(f"reserve must be 'myerson' or a number, got {self.reserve!r}") from None
            if not self.reserve > 0:
                raise ConfigError("fixed reserve must be positive")

    def distribution(self, n: int | None = None) -> Distribution:
        params = dict(self.dist_params)
        if self.dist in ("modified-er", "modified-equal-revenue") and "n" not in params:
            if n is None:
                raise ConfigError("modified-er needs its n (defaults to the auction size)")
            params["n"] = max(n, 2)
        try:
            return make_distribution(self.dist, **params)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad distribution spec: {exc}") from None

    def reserve_for(self, d: Distribution) -> float:
        return myerson_reserve(d) if self.reserve == "myerson" else float(self.reserve)


# --- per-n statistics ----------------------------------------------------------------


@dataclass
class RoundStats:
    protocol: str
    dist: str
    n: int
    eps: float
    reserve: float
    trials: int
    threshold_x: float
    mean_max_messages: float
    var_max_messages: float
    stderr_max_messages: float
    mean_terminal_level: float
    stderr_terminal_level: float
    mean_revenue: float
    stderr_revenue: float
    mean_levels_past_threshold: float
    mean_rounds_past_x: float
    stderr_rounds_past_x: float
    p_terminal_gt_1: float
    stderr_p_terminal_gt_1: float
    verdict: str = "n/a"

    def to_dict(self) -> dict:
        return asdict(self)


class _Accumulator:
    def __init__(self):
        self.messages = RunningStats()
        self.terminal = RunningStats()
        self.revenue = RunningStats()
        self.past_threshold = RunningStats()
        self.past_x = RunningStats()
        self.gt1 = RunningStats()

    def add(self, messages, terminal, revenue, second, lf_levels_x, x):
        terminal = np.asarray(terminal)
        self.messages.extend(messages)
        self.terminal.extend(terminal)
        self.revenue.extend(revenue)
        self.past_threshold.extend(np.maximum(terminal - lf_levels_x, 0))
        self.past_x.extend(np.where(np.asarray(second) > x, terminal, 0))
        self.gt1.extend(terminal > 1)

    def stats(self, protocol, dist, n, eps, reserve, trials, x) -> RoundStats:
        return RoundStats(
            protocol, dist, n, eps, reserve, trials, x,
            self.messages.mean, self.messages.variance, self.messages.stderr,
            self.terminal.mean, self.terminal.stderr,
            self.revenue.mean, self.revenue.stderr,
            self.past_threshold.mean,
            self.past_x.mean, self.past_x.stderr,
            self.gt1.mean, self.gt1.stderr,
        )


def level_function(protocol: str, d: Distribution, reserve: float, eps: float) -> LevelFunction:
    if protocol == "ironed_adra":
        return IronedMultiplicative(reserve, eps, iron(d))
    return Multiplicative(reserve, eps)


def _draw_top_two(d: Distribution, rng, n: int, size: int):
    if n == 1:
        top = sample_many(d, rng, size)
        return top, np.zeros(size)
    return sample_top_two(d, rng, n, size)


def run_cell(protocol: str, d: Distribution, n: int, eps: float, reserve: float, trials: int, seed: int,
             lf: LevelFunction | None = None) -> RoundStats:
    """All trials of one (protocol, distribution, n) cell."""
    x = threshold_x(d, n)
    if protocol in ("adra", "ironed_adra") and lf is None:
        lf = level_function(protocol, d, reserve, eps)
    acc = _Accumulator()
    key = (_key(protocol), _key(d.name), n)
    done = 0
    chunk = 0
    schedule = None
    while done < trials:
        size = min(CHUNK, trials - done)
        rng = stream(seed, *key, chunk)
        if protocol in ("adra", "ironed_adra"):
            top, second = _draw_top_two(d, rng, n, size)
            batch = honest_adra_from_top_two(top, second, n, lf, reserve)
            acc.add(batch.max_messages, batch.terminal_level, batch.revenue, second, lf.level_of(x) if x > 0 else 0, x)
        elif protocol == "apa":
            values = sample_many(d, rng, (size, n))
            msgs, steps, revenue, second = [], [], [], []
            for row in values:
                out, tr = run_apa(row.tolist(), reserve, eps, record=False)
                msgs.append(tr.max_messages())
                steps.append(out.terminal_level)
                revenue.append(out.revenue)
                second.append(out.second_highest)
            x_steps = max(0, math.ceil((x - reserve) / eps))
            acc.add(msgs, steps, revenue, second, x_steps, x)
        else:
            if schedule is None:
                schedule = build_noniid_schedule([d] * n, eps)
            values = sample_many(d, rng, (size, n))
            msgs, terms, revenue, second = [], [], [], []
            for row in values:
                out, tr = run_noniid_adra(row.tolist(), schedule, rng=rng)
                msgs.append(tr.max_messages())
                terms.append(out.terminal_level)
                revenue.append(out.revenue)
                second.append(out.second_highest)
            acc.add(msgs, terms, revenue, second, 0, x)
        done += size
        chunk += 1
    return acc.stats(protocol, d.name, n, eps, reserve, trials, x)


def _verdict(st: RoundStats) -> str:
    """Per-cell floor: every bidder commits and reveals (APA: at least its opening bid)."""
    floor = 1.0 if st.protocol == "apa" else 2.0
    return "pass" if st.mean_max_messages >= floor else "fail"


def apa_linear_fit(rows: Sequence[RoundStats]) -> dict:
    """Fit c in mean max messages = (n - 1)/eps + c and the worst relative error."""
    base = [(st.n - 1) / st.eps for st in rows]
    c = float(np.mean([st.mean_max_messages - b for st, b in zip(rows, base)]))
    rel = [abs(st.mean_max_messages - (b + c)) / (b + c) for st, b in zip(rows, base)]
    ok = c <= 5 and max(rel) <= 0.15
    return {"c": c, "max_relative_error": max(rel), "verdict": "pass" if ok else "fail"}


def measure(config: ExperimentConfig) -> list[RoundStats]:
    """Run every n in the sweep; write JSON lines and a summary CSV if ``config.output`` is set."""
    rows = []
    for n in config.n_sweep:
        d = config.distribution(n)
        r = config.reserve_for(d)
        st = run_cell(config.protocol, d, n, config.eps, r, config.trials, config.seed)
        st.verdict = _verdict(st)
        log.info("%s %s n=%d: max msgs %.3f +- %.3f", config.protocol, d.name, n,
                 st.mean_max_messages, st.stderr_max_messages)
        rows.append(st)
    if config.output:
        write_outputs(rows, config.output)
    return rows


def write_outputs(rows: Sequence[RoundStats], output: str | Path) -> tuple[Path, Path]:
    out = Path(output)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        jsonl = out.with_suffix(".jsonl")
        with jsonl.open("w") as fh:
            for st in rows:
                fh.write(json.dumps(st.to_dict(), sort_keys=True) + "\n")
        summary = out.with_suffix(".csv")
        with summary.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["protocol", "dist", "n", "eps", "mean_max_messages", "stderr", "mean_revenue", "verdict"])
            for st in rows:
                w.writerow([st.protocol, st.dist, st.n, st.eps, repr(st.mean_max_messages),
                            repr(st.stderr_max_messages), repr(st.mean_revenue), st.verdict])
    except OSError as exc:
        raise ConfigError(f"cannot write results to {out}: {exc}") from exc
    return jsonl, summary


# --- scaling fits ----------------------------------------------------------------------


def fit_slope(xs: Iterable[float], ys: Iterable[float]) -> float:
    slope, _ = np.polyfit(np.asarray(list(xs), float), np.asarray(list(ys), float), 1)
    return float(slope)


def regular_growth_check(rows: Sequence[RoundStats]) -> dict:
    """Fits of mean terminal level against log2(ln n) and against log2(n)."""
    ns = [st.n for st in rows]
    levels = [st.mean_terminal_level for st in rows]
    loglog = fit_slope([math.log2(math.log(n)) for n in ns], levels)
    log = fit_slope([math.log2(n) for n in ns], levels)
    grows = all(b >= a - SIGMAS * max(sa, sb) for (a, sa), (b, sb) in
                zip([(st.mean_terminal_level, st.stderr_terminal_level) for st in rows][:-1],
                    [(st.mean_terminal_level, st.stderr_terminal_level) for st in rows][1:]))
    grows = grows and levels[-1] > levels[0]
    return {
        "n": ns, "mean_terminal_level": levels,
        "slope_vs_log2_ln_n": loglog, "slope_vs_log2_n": log,
        "grows": grows,
        "verdict": "pass" if grows and 0.5 <= loglog <= 2.0 and log < 0.25 else "fail",
    }


# --- scaling-law experiments ----------------------------------------------------------


def irregular_failure_experiment(n_sweep: Sequence[int], eps: float, trials: int, seed: int) -> dict:
    """Plain multiplicative ADRA on ModifiedEqualRevenue(n) with reserve 1.

    Rounds past x are E[k * 1{u > x}] with x = threshold_x = n; the lower
    bound counts (1+eps)-levels, (1 - 2/e) * log_{1+eps}(n).
    """
    cells = []
    floor = 1.0 - 2.0 / math.e
    for n in n_sweep:
        d = ModifiedEqualRevenue(n)
        st = run_cell("adra", d, n, eps, 1.0, trials, seed)
        bound = floor * math.log(n) / math.log1p(eps)
        cells.append({
            "n": n,
            "threshold_x": st.threshold_x,
            "p_k_gt_1": st.p_terminal_gt_1,
            "p_k_gt_1_stderr": st.stderr_p_terminal_gt_1,
            "p_k_gt_1_ok": st.p_terminal_gt_1 >= floor - SIGMAS * st.stderr_p_terminal_gt_1,
            "mean_rounds_past_x": st.mean_rounds_past_x,
            "mean_rounds_past_x_stderr": st.stderr_rounds_past_x,
            "rounds_past_x_bound": bound,
            "rounds_past_x_ok": st.mean_rounds_past_x >= bound - SIGMAS * st.stderr_rounds_past_x,
            "mean_terminal_level": st.mean_terminal_level,
        })
    means = [c["mean_rounds_past_x"] for c in cells]
    monotone = all(b > a for a, b in zip(means, means[1:]))
    report = {"eps": eps, "trials": trials, "seed": seed, "cells": cells, "monotone": monotone}
    by_n = {c["n"]: c["mean_rounds_past_x"] for c in cells}
    if 64 in by_n and 1024 in by_n:
        report["ratio_1024_over_64"] = by_n[1024] / by_n[64]
    ok = monotone and all(c["p_k_gt_1_ok"] and c["rounds_past_x_ok"] for c in cells)
    if "ratio_1024_over_64" in report:
        ok = ok and report["ratio_1024_over_64"] >= 1.3
    report["verdict"] = "pass" if ok else "fail"
    return report


def level_floor(lf: LevelFunction, d: Distribution, z: int) -> float:
    """h_z: the smallest value in level z (the support minimum for level 0)."""
    return d.lower if z == 0 else lf.boundary(z - 1)


def ironed_t(lf: LevelFunction, d: Distribution, n: int, max_levels: int = 10_000) -> int:
    """Smallest z with Pr[w > h_z] <= 1/n."""
    for z in range(max_levels):
        if 1.0 - d.cdf(level_floor(lf, d, z)) <= 1.0 / n + 1e-15:
            return z
    raise RuntimeError("t not found within the level cap")


def ironed_recovery_experiment(n_sweep: Sequence[int], eps: float, trials: int, seed: int) -> dict:
    """Ironed ADRA on ModifiedEqualRevenue(n): low reserve (r = 1) and high reserve (r = x)."""
    cells = []
    for n in n_sweep:
        d = ModifiedEqualRevenue(n)
        structure = iron(d)
        low_lf = IronedMultiplicative(1.0, eps, structure)
        t = ironed_t(low_lf, d, n)
        low = run_cell("ironed_adra", d, n, eps, 1.0, trials, seed, lf=low_lf)
        low_bound = t + 1 + 1 / (2 * eps)

        r_high = threshold_x(d, n)
        high_lf = IronedMultiplicative(r_high, eps, structure)
        t_high = ironed_t(high_lf, d, n)
        h_t = level_floor(high_lf, d, t_high)
        high = run_cell("ironed_adra", d, n, eps, r_high, trials, seed + 1, lf=high_lf)
        high_bound = (1 + eps) / (2 * eps)
        cells.append({
            "n": n,
            "t": t,
            "h_t": level_floor(low_lf, d, t),
            "low_reserve": 1.0,
            "low_regime": "low" if 1.0 < level_floor(low_lf, d, t) else "high",
            "low_mean_terminal_level": low.mean_terminal_level,
            "low_stderr": low.stderr_terminal_level,
            "low_bound": low_bound,
            "low_ok": low.mean_terminal_level <= low_bound + SIGMAS * low.stderr_terminal_level,
            "high_reserve": r_high,
            "high_reserve_ge_h_t": r_high >= h_t,
            "high_mean_terminal_level": high.mean_terminal_level,
            "high_stderr": high.stderr_terminal_level,
            "high_bound": high_bound,
            "high_ok": high.mean_terminal_level <= high_bound + SIGMAS * high.stderr_terminal_level,
        })
    by_n = {c["n"]: c["low_mean_terminal_level"] for c in cells}
    report = {"eps": eps, "trials": trials, "seed": seed, "cells": cells}
    ok = all(c["low_ok"] and c["high_ok"] and c["high_reserve_ge_h_t"] for c in cells)
    if 64 in by_n and 1024 in by_n:
        report["flatness_1024_minus_64"] = by_n[1024] - by_n[64]
        ok = ok and report["flatness_1024_minus_64"] <= 1.0
    report["verdict"] = "pass" if ok else "fail"
    return report


def adra_upperbound_check(dist: Distribution, n: int, eps: float, reserve: float, trials: int, seed: int,
                          scale: float = 10.0) -> dict:
    """Mean max messages against log_{1+eps}(Rev/r) + 1/e + 4, plus the Jensen step and scale invariance."""
    lf = Multiplicative(reserve, eps)
    rng = stream(seed, _key("upperbound"), n)
    top, second = _draw_top_two(dist, rng, n, trials)
    batch = honest_adra_from_top_two(top, second, n, lf, reserve)
    msgs = RunningStats()
    msgs.extend(batch.max_messages)
    rev = RunningStats()
    rev.extend(batch.revenue)
    bound = math.log(max(rev.mean, reserve) / reserve) / math.log1p(eps) + 1 / math.e + 4

    # Jensen step: E[log(u/r) 1{u>=r}] <= log(E[u 1{u>=r}] / r) + 1/e
    above = second >= reserve
    logs = RunningStats()
    logs.extend(np.where(above, np.log(np.maximum(second, reserve) / reserve) / math.log1p(eps), 0.0))
    tail_mean = float(np.mean(np.where(above, second, 0.0)))
    jensen_rhs = (math.log(tail_mean / reserve) / math.log1p(eps) if tail_mean > 0 else -math.inf) + 1 / math.e

    # scale invariance: values and reserve multiplied by a constant
    scaled = honest_adra_from_top_two(top * scale, second * scale, n, Multiplicative(reserve * scale, eps),
                                      reserve * scale)
    term = RunningStats()
    term.extend(batch.terminal_level)
    term_scaled = RunningStats()
    term_scaled.extend(scaled.terminal_level)
    return {
        "dist": dist.name, "n": n, "eps": eps, "reserve": reserve, "trials": trials,
        "revenue": rev.mean, "revenue_stderr": rev.stderr,
        "mean_max_messages": msgs.mean, "stderr": msgs.stderr,
        "bound": bound,
        "bound_ok": msgs.mean <= bound + SIGMAS * msgs.stderr,
        "jensen_lhs": logs.mean, "jensen_rhs": jensen_rhs,
        "jensen_ok": logs.mean <= jensen_rhs + logs.stderr,
        "mean_terminal_level": term.mean, "scaled_mean_terminal_level": term_scaled.mean,
        "scale_ok": abs(term.mean - term_scaled.mean) <= term.stderr,
        "verdict": "pass" if msgs.mean <= bound + SIGMAS * msgs.stderr else "fail",
    }
