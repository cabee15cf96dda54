"""Tagged extended nonnegative reals: finite floats or +infinity.

Infinite moments and tail exponents are first-class values in this library,
so they are carried as an explicit tag rather than a sentinel float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class ExtReal:
    """A real number extended with +infinity.

    ``finite`` holds the value, or ``None`` for the infinity tag.
    Supports total ordering, addition, and scaling by positive reals.
    """

    finite: float | None

    @staticmethod
    def of(x: Union["ExtReal", float, int]) -> "ExtReal":
        if isinstance(x, ExtReal):
            return x
        x = float(x)
        if math.isinf(x):
            return INF
        if math.isnan(x):
            raise ValueError("NaN is not an extended real")
        return ExtReal(x)

    @property
    def is_inf(self) -> bool:
        return self.finite is None

    def float_value(self) -> float:
        """The value as a plain float, with math.inf standing in for the tag."""
        return math.inf if self.finite is None else self.finite

    def expect_finite(self) -> float:
        if self.finite is None:
            raise ValueError("expected a finite value, got +inf")
        return self.finite

    def __lt__(self, other) -> bool:
        return self.float_value() < ExtReal.of(other).float_value()

    def __le__(self, other) -> bool:
        return self.float_value() <= ExtReal.of(other).float_value()

    def __gt__(self, other) -> bool:
        return self.float_value() > ExtReal.of(other).float_value()

    def __ge__(self, other) -> bool:
        return self.float_value() >= ExtReal.of(other).float_value()

    def __add__(self, other) -> "ExtReal":
        other = ExtReal.of(other)
        if self.is_inf or other.is_inf:
            return INF
        return ExtReal(self.finite + other.finite)

    __radd__ = __add__

    def __mul__(self, other) -> "ExtReal":
        other = ExtReal.of(other)
        if self.is_inf or other.is_inf:
            if self.float_value() == 0.0 or other.float_value() == 0.0:
                raise ValueError("0 * inf is undefined")
            return INF
        return ExtReal(self.finite * other.finite)

    __rmul__ = __mul__

    def scale(self, a: float) -> "ExtReal":
        """Multiply by a strictly positive finite scalar."""
        if not (a > 0 and math.isfinite(a)):
            raise ValueError("scale factor must be positive and finite")
        return INF if self.is_inf else ExtReal(self.finite * a)

    def __repr__(self) -> str:
        return "inf" if self.is_inf else repr(self.finite)

    def to_json_obj(self):
        """JSON encoding: plain number, or the string tag "inf"."""
        return "inf" if self.is_inf else self.finite

    @staticmethod
    def from_json_obj(obj) -> "ExtReal":
        if obj == "inf":
            return INF
        return ExtReal.of(float(obj))


INF = ExtReal(None)


def ext_min(*values: ExtReal) -> ExtReal:
    return min(values, key=lambda v: v.float_value())


def ext_max(*values: ExtReal) -> ExtReal:
    return max(values, key=lambda v: v.float_value())
