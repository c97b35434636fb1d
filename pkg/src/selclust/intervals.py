"""Finite unions of disjoint intervals inside ``[0, inf)``.

Endpoints carry open/closed flags. Sets are kept canonical: sorted, disjoint,
and with touching pieces merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self):
        if math.isinf(self.hi):
            object.__setattr__(self, "hi_open", True)

    @property
    def empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and (self.lo_open or self.hi_open)

    def __contains__(self, v) -> bool:
        above = v > self.lo or (v == self.lo and not self.lo_open)
        below = v < self.hi or (v == self.hi and not self.hi_open)
        return above and below

    def as_list(self) -> list:
        return [self.lo, "inf" if math.isinf(self.hi) else self.hi, self.lo_open, self.hi_open]


def _touch(cur: Interval, nxt: Interval) -> bool:
    if nxt.lo < cur.hi:
        return True
    return nxt.lo == cur.hi and not (cur.hi_open and nxt.lo_open)


def _canonical(pieces: Iterable[Interval]) -> tuple[Interval, ...]:
    pieces = sorted((p for p in pieces if not p.empty), key=lambda p: (p.lo, p.lo_open))
    out: list[Interval] = []
    for p in pieces:
        if out and _touch(out[-1], p):
            cur = out[-1]
            if p.hi > cur.hi or (p.hi == cur.hi and not p.hi_open):
                out[-1] = Interval(cur.lo, p.hi, cur.lo_open, p.hi_open)
        else:
            out.append(p)
    return tuple(out)


class IntervalSet:
    """Immutable union of disjoint intervals in ``[0, inf)``."""

    __slots__ = ("_pieces",)

    def __init__(self, intervals: Iterable = ()):
        pieces = []
        for itv in intervals:
            if not isinstance(itv, Interval):
                itv = Interval(*itv)
            lo = max(float(itv.lo), 0.0)
            lo_open = itv.lo_open if lo == itv.lo else False
            pieces.append(Interval(lo, float(itv.hi), lo_open, itv.hi_open))
        self._pieces = _canonical(pieces)

    @classmethod
    def full(cls) -> "IntervalSet":
        return cls([Interval(0.0, INF)])

    @classmethod
    def empty_set(cls) -> "IntervalSet":
        return cls()

    @property
    def intervals(self) -> tuple[Interval, ...]:
        return self._pieces

    def __iter__(self):
        return iter(self._pieces)

    def __len__(self) -> int:
        return len(self._pieces)

    def __bool__(self) -> bool:
        return bool(self._pieces)

    def __eq__(self, other) -> bool:
        return isinstance(other, IntervalSet) and self._pieces == other._pieces

    def __hash__(self):
        return hash(self._pieces)

    def __repr__(self) -> str:
        if not self._pieces:
            return "IntervalSet(empty)"
        parts = [
            f"{'(' if p.lo_open else '['}{p.lo:.6g}, {p.hi:.6g}{')' if p.hi_open else ']'}"
            for p in self._pieces
        ]
        return "IntervalSet(" + " u ".join(parts) + ")"

    def __contains__(self, v) -> bool:
        return any(v in p for p in self._pieces)

    def contains(self, values) -> np.ndarray:
        """Vectorised membership test."""
        values = np.asarray(values, dtype=np.float64)
        out = np.zeros(values.shape, dtype=bool)
        for p in self._pieces:
            above = (values > p.lo) if p.lo_open else (values >= p.lo)
            below = (values < p.hi) if p.hi_open else (values <= p.hi)
            out |= above & below
        return out

    @property
    def endpoints(self) -> np.ndarray:
        pts = [e for p in self._pieces for e in (p.lo, p.hi) if math.isfinite(e)]
        return np.array(sorted(set(pts)))

    @property
    def inf(self) -> float:
        return self._pieces[0].lo if self._pieces else math.nan

    @property
    def sup(self) -> float:
        return self._pieces[-1].hi if self._pieces else math.nan

    def complement(self) -> "IntervalSet":
        """Complement within ``[0, inf)``."""
        out = []
        lo, lo_open = 0.0, False
        for p in self._pieces:
            out.append(Interval(lo, p.lo, lo_open, not p.lo_open))
            lo, lo_open = p.hi, not p.hi_open
        if not self._pieces or math.isfinite(self._pieces[-1].hi):
            out.append(Interval(lo, INF, lo_open, True))
        return IntervalSet(out)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self._pieces + other._pieces)

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        a, b = self._pieces, other._pieces
        while i < len(a) and j < len(b):
            p, r = a[i], b[j]
            if p.lo > r.lo or (p.lo == r.lo and p.lo_open):
                lo, lo_open = p.lo, p.lo_open
            else:
                lo, lo_open = r.lo, r.lo_open
            if p.hi < r.hi or (p.hi == r.hi and p.hi_open):
                hi, hi_open = p.hi, p.hi_open
            else:
                hi, hi_open = r.hi, r.hi_open
            out.append(Interval(lo, hi, lo_open, hi_open))
            if p.hi < r.hi or (p.hi == r.hi and p.hi_open and not r.hi_open):
                i += 1
            else:
                j += 1
        return IntervalSet(out)

    __and__ = intersect
    __or__ = union

    def to_json(self) -> list[list]:
        """``[[lo, hi, lo_open, hi_open], ...]`` with ``"inf"`` for an unbounded end."""
        return [p.as_list() for p in self._pieces]

    @classmethod
    def from_json(cls, data: Sequence[Sequence]) -> "IntervalSet":
        return cls(
            Interval(float(lo), INF if hi == "inf" else float(hi), bool(lo_open), bool(hi_open))
            for lo, hi, lo_open, hi_open in data
        )


def union_all(sets: Iterable[IntervalSet]) -> IntervalSet:
    return IntervalSet(p for s in sets for p in s)


def intersect_all(sets: Iterable[IntervalSet]) -> IntervalSet:
    """Intersection of many sets in ``O(N log N)``: complement of the union of complements."""
    sets = list(sets)
    if not sets:
        return IntervalSet.full()
    return union_all(s.complement() for s in sets).complement()
