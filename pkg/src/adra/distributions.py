"""Value distributions with the Myersonian toolkit.

Every distribution exposes a CDF, a density where one exists, the
generalized inverse (``quantile``), inverse-CDF sampling, virtual values,
ironing and the optimal (Myerson) reserve.  All objects are immutable and
can be shared freely between simulation workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ENVELOPE_TOL = 1e-9


class NoDensityError(ValueError):
    """Raised when a virtual value is requested at a point without a density."""


@dataclass(frozen=True)
class IronedStructure:
    """Ironed intervals (value space) plus the monotone ironed virtual value."""

    intervals: tuple[tuple[float, float], ...]
    ironed_virtual: Callable[[float], float] = field(compare=False, repr=False)
    grid_resolution: int = 0

    def containing(self, x: float) -> tuple[float, float] | None:
        for lo, hi in self.intervals:
            if lo <= x <= hi:
                return (lo, hi)
        return None

    def tau(self, x: float) -> float:
        """Upper end of the ironed interval holding ``x`` (``x`` itself if none)."""
        iv = self.containing(x)
        return x if iv is None else iv[1]


class Distribution:
    """Base class; subclasses fill in the closed forms they know."""

    name = "distribution"
    lower = 0.0
    upper = math.inf

    # --- primitives -------------------------------------------------------
    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def pdf(self, x: float) -> float | None:
        """Density at ``x``; ``None`` where the law has no density."""
        raise NotImplementedError

    def quantile(self, q: float) -> float:
        """inf{x : F(x) >= q}."""
        raise NotImplementedError

    def sf_ge(self, p: float) -> float:
        """Pr[v >= p]."""
        return 1.0 - self.cdf(p)

    def isf(self, s: np.ndarray) -> np.ndarray:
        """Vectorized quantile(1 - s); subclasses override for tail precision."""
        return np.vectorize(self.quantile, otypes=[float])(1.0 - np.asarray(s, dtype=float))

    def quantiles(self, u: np.ndarray) -> np.ndarray:
        return np.vectorize(self.quantile, otypes=[float])(np.asarray(u, dtype=float))

    # --- derived ----------------------------------------------------------
    def virtual_value(self, x: float) -> float:
        f = self.pdf(x)
        if f is None or f <= 0.0:
            raise NoDensityError(f"no density at x={x!r} for {self.name}")
        return x - (1.0 - self.cdf(x)) / f

    def analytic_ironing(self) -> IronedStructure | None:
        return None

    def analytic_reserve(self) -> float | None:
        return None

    def analytic_threshold(self, n: int) -> float | None:
        return None

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.name, **self.params()}


@dataclass(frozen=True)
class EqualRevenue(Distribution):
    """Pr[v >= p] = 1/p on [1, inf)."""

    name = "equal-revenue"
    lower = 1.0

    def cdf(self, x):
        return 0.0 if x < 1.0 else 1.0 - 1.0 / x

    def pdf(self, x):
        return None if x < 1.0 else 1.0 / (x * x)

    def sf_ge(self, p):
        return 1.0 if p <= 1.0 else 1.0 / p

    def quantile(self, q):
        if q >= 1.0:
            return math.inf
        return 1.0 / (1.0 - max(q, 0.0))

    def isf(self, s):
        return 1.0 / np.asarray(s, dtype=float)

    def quantiles(self, u):
        return 1.0 / (1.0 - np.asarray(u, dtype=float))

    def analytic_ironing(self):
        return IronedStructure((), _zero)

    def analytic_reserve(self):
        return 1.0

    def analytic_threshold(self, n):
        return float(n)


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0
    name = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be positive")

    def cdf(self, x):
        return 0.0 if x < 0 else -math.expm1(-self.rate * x)

    def pdf(self, x):
        return None if x < 0 else self.rate * math.exp(-self.rate * x)

    def sf_ge(self, p):
        return 1.0 if p <= 0 else math.exp(-self.rate * p)

    def virtual_value(self, x):
        if x < 0:
            raise NoDensityError(f"no density at x={x!r} for {self.name}")
        return x - 1.0 / self.rate

    def quantile(self, q):
        if q >= 1.0:
            return math.inf
        return -math.log1p(-max(q, 0.0)) / self.rate

    def isf(self, s):
        return -np.log(np.asarray(s, dtype=float)) / self.rate

    def quantiles(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def analytic_ironing(self):
        mean = 1.0 / self.rate
        return IronedStructure((), lambda x: x - mean)

    def analytic_reserve(self):
        return 1.0 / self.rate

    def analytic_threshold(self, n):
        return math.log(n) / self.rate

    def params(self):
        return {"rate": self.rate}


@dataclass(frozen=True)
class ModifiedEqualRevenue(Distribution):
    """Equal revenue with the mass on [1, n] collapsed onto an atom at 1.

    F = 0 below 1, 1 - 1/n on [1, n], 1 - 1/p above n.
    """

    n: int = 2
    name = "modified-er"
    lower = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("modified equal revenue needs integer n >= 2")

    def cdf(self, x):
        if x < 1.0:
            return 0.0
        if x <= self.n:
            return 1.0 - 1.0 / self.n
        return 1.0 - 1.0 / x

    def pdf(self, x):
        # atom at 1 and a flat CDF on (1, n]
        return 1.0 / (x * x) if x > self.n else None

    def sf_ge(self, p):
        if p <= 1.0:
            return 1.0
        if p <= self.n:
            return 1.0 / self.n
        return 1.0 / p

    def quantile(self, q):
        if q >= 1.0:
            return math.inf
        if q <= 1.0 - 1.0 / self.n:
            return 1.0
        return 1.0 / (1.0 - q)

    def isf(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 1.0 / self.n, 1.0, 1.0 / s)

    def quantiles(self, u):
        return self.isf(1.0 - np.asarray(u, dtype=float))

    def analytic_ironing(self):
        return IronedStructure(((1.0, float(self.n)),), _zero)

    def analytic_reserve(self):
        return 1.0

    def analytic_threshold(self, n):
        # upper generalized inverse F^{-1}(1 - 1/n): for n == self.n this is n
        return self._upper_quantile(1.0 - 1.0 / n)

    def _upper_quantile(self, q):
        if q < 1.0 - 1.0 / self.n:
            return 1.0
        if q == 1.0 - 1.0 / self.n:
            return float(self.n)
        return 1.0 / (1.0 - q)

    def params(self):
        return {"n": self.n}


@dataclass(frozen=True)
class UniformInterval(Distribution):
    lo: float = 0.0
    hi: float = 1.0
    name = "uniform"

    def __post_init__(self):
        if not (0 <= self.lo < self.hi < math.inf):
            raise ValueError("uniform needs 0 <= lo < hi < inf")
        object.__setattr__(self, "lower", float(self.lo))
        object.__setattr__(self, "upper", float(self.hi))

    def cdf(self, x):
        return min(1.0, max(0.0, (x - self.lo) / (self.hi - self.lo)))

    def pdf(self, x):
        if self.lo <= x <= self.hi:
            return 1.0 / (self.hi - self.lo)
        return None

    def quantile(self, q):
        q = min(1.0, max(0.0, q))
        return self.lo + q * (self.hi - self.lo)

    def isf(self, s):
        return self.hi - np.asarray(s, dtype=float) * (self.hi - self.lo)

    def quantiles(self, u):
        return self.lo + np.asarray(u, dtype=float) * (self.hi - self.lo)

    def analytic_ironing(self):
        return IronedStructure((), lambda x: 2.0 * x - self.hi)

    def analytic_reserve(self):
        return max(self.lo, self.hi / 2.0)

    def params(self):
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PiecewiseCdf(Distribution):
    """CDF linear between ``breakpoints`` (x_i, F_i), F_0 = 0 and F_last = 1.

    A jump (two points sharing an x) is an atom.
    """

    breakpoints: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 1.0))
    name = "piecewise"

    def __post_init__(self):
        pts = tuple((float(x), float(F)) for x, F in self.breakpoints)
        if len(pts) < 2:
            raise ValueError("need at least two breakpoints")
        xs = [p[0] for p in pts]
        Fs = [p[1] for p in pts]
        if xs[0] < 0 or any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoint x must be nonnegative and nondecreasing")
        if any(b < a for a, b in zip(Fs, Fs[1:])):
            raise ValueError("CDF values must be nondecreasing")
        if Fs[0] != 0.0 or Fs[-1] != 1.0:
            raise ValueError("CDF must start at 0 and end at 1")
        object.__setattr__(self, "breakpoints", pts)
        object.__setattr__(self, "lower", xs[0])
        object.__setattr__(self, "upper", xs[-1])

    def cdf(self, x):
        pts = self.breakpoints
        if x < pts[0][0]:
            return 0.0
        if x >= pts[-1][0]:
            return 1.0
        # right-continuous: take the last segment starting at or before x
        val = 0.0
        for (x0, F0), (x1, F1) in zip(pts, pts[1:]):
            if x0 <= x < x1:
                val = F0 + (F1 - F0) * (x - x0) / (x1 - x0)
            elif x == x1:
                val = F1
        return val

    def pdf(self, x):
        for (x0, F0), (x1, F1) in zip(self.breakpoints, self.breakpoints[1:]):
            if x0 < x < x1 and x1 > x0:
                slope = (F1 - F0) / (x1 - x0)
                return slope if slope > 0 else None
        return None

    def quantile(self, q):
        q = min(1.0, max(0.0, q))
        pts = self.breakpoints
        if q <= 0.0:
            return pts[0][0]
        for (x0, F0), (x1, F1) in zip(pts, pts[1:]):
            if F1 >= q and F1 > F0:
                if x1 == x0 or q <= F0:
                    return x0
                return x0 + (q - F0) * (x1 - x0) / (F1 - F0)
        return pts[-1][0]

    def params(self):
        return {"breakpoints": [list(p) for p in self.breakpoints]}


def _zero(x: float) -> float:
    return 0.0


# --- operations --------------------------------------------------------------


def virtual_value(d: Distribution, x: float) -> float:
    return d.virtual_value(x)


def revenue_curve(d: Distribution, p: float) -> float:
    """p * Pr[v >= p]."""
    if p < 0:
        raise ValueError("price must be nonnegative")
    return p * d.sf_ge(p)


def sample(d: Distribution, rng: np.random.Generator) -> float:
    return float(d.quantiles(np.array([rng.random()]))[0])


def sample_many(d: Distribution, rng: np.random.Generator, size) -> np.ndarray:
    return d.quantiles(rng.random(size))


def sample_top_two(d: Distribution, rng: np.random.Generator, n: int, size: int):
    """Highest and second-highest of ``n`` i.i.d. draws, ``size`` times.

    Uses the order statistics of uniforms in survival space, so the cost is
    independent of ``n``.
    """
    if n < 2:
        raise ValueError("need n >= 2 for a second-highest draw")
    a = rng.random(size)
    b = rng.random(size)
    # survival of the max: 1 - A^{1/n}; of the runner-up: 1 - U_max * B^{1/(n-1)}
    log_umax = np.log1p(-a) / n
    s_max = -np.expm1(log_umax)
    s_second = -np.expm1(log_umax + np.log1p(-b) / (n - 1))
    return d.isf(s_max), d.isf(s_second)


def threshold_x(d: Distribution, n: int) -> float:
    """inf{p : Pr[v >= p] <= 1/n}, evaluated as the upper quantile F^{-1}(1 - 1/n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    exact = d.analytic_threshold(n)
    if exact is not None:
        return float(exact)
    target = 1.0 - 1.0 / n
    lo = d.lower
    hi = d.upper if math.isfinite(d.upper) else max(1.0, d.quantile(target)) * 2.0
    while not math.isfinite(d.upper) and d.cdf(hi) <= target:
        hi *= 2.0
    # largest p with F(p) <= target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if d.cdf(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


# --- ironing -----------------------------------------------------------------


def upper_hull(xs: np.ndarray, ys: np.ndarray) -> list[int]:
    """Indices of the upper concave hull of points sorted by x (monotone chain)."""
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (xs[a] - xs[o]) * (ys[i] - ys[o]) - (ys[a] - ys[o]) * (xs[i] - xs[o])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


@dataclass(frozen=True)
class _NumericIroning:
    qs: np.ndarray
    prices: np.ndarray
    hull_q: np.ndarray
    hull_slopes: np.ndarray
    d: Distribution

    def __call__(self, x: float) -> float:
        q = self.d.sf_ge(x)
        j = int(np.searchsorted(self.hull_q, q, side="left")) - 1
        j = min(max(j, 0), len(self.hull_slopes) - 1)
        return float(self.hull_slopes[j])


def revenue_grid(d: Distribution, grid_resolution: int):
    """Quantile grid q in (0, 1] with prices quantile(1 - q) and revenues q * price."""
    qs = np.arange(1, grid_resolution + 1, dtype=float) / grid_resolution
    prices = d.isf(qs)
    return qs, prices, qs * prices


def numeric_ironing(d: Distribution, grid_resolution: int) -> IronedStructure:
    if grid_resolution < 16:
        raise ValueError("grid_resolution must be >= 16")
    qs, prices, revenue = revenue_grid(d, grid_resolution)
    xq, yr = qs, revenue
    hull = upper_hull(xq, yr)
    hq = xq[hull]
    hr = yr[hull]
    slopes = np.diff(hr) / np.diff(hq)
    envelope = np.interp(xq, hq, hr)
    gap = envelope - yr

    # maximal runs of grid points strictly under the envelope; the bracketing
    # touch points give the value range (prices fall as q rises)
    price_at = prices
    under = gap > ENVELOPE_TOL
    intervals: list[tuple[float, float]] = []
    i = 0
    while i < len(under):
        if not under[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(under) and under[j + 1]:
            j += 1
        before = max(i - 1, 0)
        after = min(j + 1, len(under) - 1)
        intervals.append((float(price_at[after]), float(price_at[before])))
        i = j + 1
    intervals.sort()
    return IronedStructure(
        tuple(intervals),
        _NumericIroning(qs, prices, hq, slopes, d),
        grid_resolution,
    )


def iron(d: Distribution, grid_resolution: int = 4096) -> IronedStructure:
    """Ironed structure of ``d``; closed forms override the numeric envelope."""
    if grid_resolution < 16:
        raise ValueError("grid_resolution must be >= 16")
    exact = d.analytic_ironing()
    if exact is not None:
        return IronedStructure(exact.intervals, exact.ironed_virtual, grid_resolution)
    return numeric_ironing(d, grid_resolution)


def myerson_reserve(d: Distribution, grid_resolution: int = 1 << 16) -> float:
    """Smallest value whose ironed virtual value is >= 0."""
    exact = d.analytic_reserve()
    if exact is not None:
        return float(exact)
    qs, prices, revenue = revenue_grid(d, grid_resolution)
    best = revenue.max()
    # ties: the largest selling probability, i.e. the infimum of optimal prices
    idx = np.nonzero(revenue >= best - ENVELOPE_TOL)[0][-1]
    return float(prices[idx])


def ironed_inverse(ironed: IronedStructure, y: float, lo: float, hi: float) -> float:
    """sup{x in [lo, hi] : ironed_virtual(x) <= y} by bisection."""
    phi = ironed.ironed_virtual
    if phi(hi) <= y:
        return math.inf if not math.isfinite(hi) else hi
    if phi(lo) > y:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) <= y:
            lo = mid
        else:
            hi = mid
    return lo


# --- config helpers ----------------------------------------------------------

_KINDS = {
    "equal-revenue": EqualRevenue,
    "exponential": Exponential,
    "modified-er": ModifiedEqualRevenue,
    "uniform": UniformInterval,
    "piecewise": PiecewiseCdf,
}


def make_distribution(kind: str, **params) -> Distribution:
    """Build a distribution from its config name, e.g. ``("exponential", rate=1.0)``."""
    key = kind.lower().replace("_", "-")
    aliases = {"er": "equal-revenue", "exp": "exponential", "modified-equal-revenue": "modified-er"}
    key = aliases.get(key, key)
    if key not in _KINDS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    cls = _KINDS[key]
    if cls is EqualRevenue:
        return EqualRevenue()
    if cls is Exponential:
        return Exponential(float(params.get("rate", 1.0)))
    if cls is ModifiedEqualRevenue:
        return ModifiedEqualRevenue(int(params["n"]))
    if cls is UniformInterval:
        return UniformInterval(float(params.get("lo", 0.0)), float(params.get("hi", 1.0)))
    bps: Sequence = params["breakpoints"]
    return PiecewiseCdf(tuple(tuple(p) for p in bps))
