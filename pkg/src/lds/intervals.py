"""Finite unions of real intervals with open/closed endpoints."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True, order=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise StructuralError("interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise StructuralError(f"interval has lo > hi: {self.lo} > {self.hi}")
        # Infinite endpoints are never attained.
        if math.isinf(self.lo):
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi):
            object.__setattr__(self, "hi_closed", False)

    @property
    def is_empty(self) -> bool:
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        left = x >= self.lo if self.lo_closed else x > self.lo
        right = x <= self.hi if self.hi_closed else x < self.hi
        return left & right

    def __str__(self):
        return "{}{},{}{}".format(
            "[" if self.lo_closed else "(", _fmt(self.lo), _fmt(self.hi), "]" if self.hi_closed else ")"
        )


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _touching(a: Interval, b: Interval) -> bool:
    """Whether ``b`` (starting at or after ``a``) overlaps or abuts ``a`` without a gap."""
    if b.lo < a.hi:
        return True
    return b.lo == a.hi and (a.hi_closed or b.lo_closed)


class IntervalSet:
    """Canonical (sorted, disjoint, non-empty) union of intervals."""

    __slots__ = ("intervals",)

    def __init__(self, intervals=()):
        parts = sorted(
            (iv for iv in intervals if not iv.is_empty),
            key=lambda iv: (iv.lo, not iv.lo_closed),
        )
        merged: list[Interval] = []
        for iv in parts:
            if merged and _touching(merged[-1], iv):
                last = merged[-1]
                if iv.hi > last.hi:
                    hi, hi_closed = iv.hi, iv.hi_closed
                elif iv.hi == last.hi:
                    hi, hi_closed = last.hi, last.hi_closed or iv.hi_closed
                else:
                    hi, hi_closed = last.hi, last.hi_closed
                merged[-1] = Interval(last.lo, hi, last.lo_closed, hi_closed)
            else:
                merged.append(iv)
        self.intervals = tuple(merged)

    @classmethod
    def closed(cls, lo: float, hi: float) -> "IntervalSet":
        return cls([Interval(lo, hi, True, True)])

    @classmethod
    def whole_line(cls) -> "IntervalSet":
        return cls([Interval(-math.inf, math.inf, False, False)])

    @classmethod
    def at_least(cls, a: float) -> "IntervalSet":
        return cls([Interval(a, math.inf, True, False)])

    @classmethod
    def parse(cls, text: str) -> "IntervalSet":
        """Parse ``"[0.7,1]"``, ``"(-inf,0]U[2,3)"`` and similar (``U`` or ``;`` separates)."""
        pieces = [p.strip() for p in re.split(r"[;Uu∪]", text) if p.strip()]
        if not pieces:
            raise StructuralError(f"no intervals in {text!r}")
        out = []
        for p in pieces:
            m = re.fullmatch(r"([\[\(])\s*([^,\s]+)\s*,\s*([^\]\)\s]+)\s*([\]\)])", p)
            if not m:
                raise StructuralError(f"cannot parse interval {p!r}")
            try:
                lo, hi = float(m.group(2)), float(m.group(3))
            except ValueError:
                raise StructuralError(f"cannot parse interval endpoints in {p!r}") from None
            out.append(Interval(lo, hi, m.group(1) == "[", m.group(4) == "]"))
        return cls(out)

    @classmethod
    def from_json(cls, obj) -> "IntervalSet":
        if isinstance(obj, str):
            return cls.parse(obj)
        out = []
        for item in obj:
            if isinstance(item, str):
                out.extend(cls.parse(item).intervals)
            elif isinstance(item, dict):
                out.append(
                    Interval(float(item["lo"]), float(item["hi"]),
                             bool(item.get("lo_closed", True)), bool(item.get("hi_closed", True)))
                )
            else:
                lo, hi = item[:2]
                out.append(Interval(float(lo), float(hi)))
        return cls(out)

    def to_json(self) -> str:
        return str(self)

    def __str__(self):
        return "U".join(str(iv) for iv in self.intervals) if self.intervals else "{}"

    def __repr__(self):
        return f"IntervalSet({str(self)!r})"

    def __eq__(self, other):
        return isinstance(other, IntervalSet) and self.intervals == other.intervals

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def is_whole_line(self) -> bool:
        return len(self.intervals) == 1 and self.intervals[0].lo == -math.inf and self.intervals[0].hi == math.inf

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        hit = np.zeros(x.shape, dtype=bool)
        for iv in self.intervals:
            hit |= iv.contains(x)
        return hit

    def interior(self) -> "IntervalSet":
        return IntervalSet(Interval(iv.lo, iv.hi, False, False) for iv in self.intervals)

    def closure(self) -> "IntervalSet":
        return IntervalSet(Interval(iv.lo, iv.hi, True, True) for iv in self.intervals)
