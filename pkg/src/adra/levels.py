"""Level functions: bids to integer levels and level boundaries back to bids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import IronedStructure

SNAP = 1e-12


def _check_bid(b: float) -> None:
    if not b > 0:
        raise ValueError(f"bid must be positive, got {b!r}")


def _check_params(reserve: float, eps: float) -> None:
    if not reserve > 0:
        raise ValueError("reserve must be positive")
    if not eps > 0:
        raise ValueError("step eps must be positive")


def _ceil_snapped(x: float) -> int:
    nearest = round(x)
    if abs(x - nearest) <= SNAP * max(1.0, abs(x)):
        return int(nearest)
    return math.ceil(x)


@dataclass(frozen=True)
class Multiplicative:
    """g(b) = ceil(log_{1+eps}(b / r)), bids at or below r sit at level 0."""

    reserve: float
    eps: float

    def __post_init__(self):
        _check_params(self.reserve, self.eps)

    def level_of(self, b: float) -> int:
        _check_bid(b)
        if b <= self.reserve:
            return 0
        return max(0, _ceil_snapped(math.log(b / self.reserve) / math.log1p(self.eps)))

    def levels_of(self, bids: np.ndarray) -> np.ndarray:
        bids = np.asarray(bids, dtype=float)
        x = np.log(np.maximum(bids, self.reserve) / self.reserve) / math.log1p(self.eps)
        nearest = np.round(x)
        snapped = np.where(np.abs(x - nearest) <= SNAP * np.maximum(1.0, np.abs(x)), nearest, np.ceil(x))
        return np.maximum(snapped, 0).astype(np.int64)

    def boundary(self, k: int) -> float:
        if k < 0:
            raise ValueError("level must be nonnegative")
        return self.reserve * (1.0 + self.eps) ** k


@dataclass(frozen=True)
class IronedMultiplicative:
    """Multiplicative steps rounded up to the top of the current ironed interval.

    boundary(0) = r and boundary(k+1) = tau((1 + eps) * boundary(k)).
    """

    reserve: float
    eps: float
    ironing: IronedStructure
    _head: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_params(self.reserve, self.eps)
        top = max((hi for _, hi in self.ironing.intervals), default=0.0)
        head = [self.reserve]
        # past the last ironed interval the sequence is purely geometric
        while head[-1] <= top:
            head.append(self.ironing.tau((1.0 + self.eps) * head[-1]))
        object.__setattr__(self, "_head", tuple(head))

    def boundary(self, k: int) -> float:
        if k < 0:
            raise ValueError("level must be nonnegative")
        head = self._head
        if k < len(head):
            return head[k]
        return head[-1] * (1.0 + self.eps) ** (k - len(head) + 1)

    def level_of(self, b: float) -> int:
        _check_bid(b)
        head = self._head
        for k, edge in enumerate(head):
            if b <= edge:
                return k
        x = math.log(b / head[-1]) / math.log1p(self.eps)
        return len(head) - 1 + max(1, _ceil_snapped(x))

    def levels_of(self, bids: np.ndarray) -> np.ndarray:
        bids = np.asarray(bids, dtype=float)
        head = np.asarray(self._head)
        out = np.searchsorted(head, bids, side="left").astype(np.int64)
        tail = out >= len(head)
        if np.any(tail):
            x = np.log(bids[tail] / head[-1]) / math.log1p(self.eps)
            nearest = np.round(x)
            snapped = np.where(np.abs(x - nearest) <= SNAP * np.maximum(1.0, np.abs(x)), nearest, np.ceil(x))
            out[tail] = len(head) - 1 + np.maximum(snapped, 1).astype(np.int64)
        return out


LevelFunction = Multiplicative | IronedMultiplicative


def level_of(lf: LevelFunction, b: float) -> int:
    return lf.level_of(b)


def level_boundary(lf: LevelFunction, k: int) -> float:
    return lf.boundary(k)
