"""Exact arithmetic in the quadratic field Q(sqrt(m)).

Every quantity produced by the tree model -- cylinder measures, visual
weights, matrix coefficients -- lives in Q(sqrt(2k-1)) once distances are
measured in edge-length units.  Keeping them there (instead of rounding to
float) is what makes the dual-route equality checks meaningful: two
independent computations either agree on the nose or they do not.

Scalars are immutable.  Floats only appear at the output boundary via
``to_float`` / ``decimal_str``.
"""

from __future__ import annotations

import decimal
import math
from fractions import Fraction
from numbers import Rational


def _isqrt_exact(m: int) -> int | None:
    """Return the integer square root of m if m is a perfect square, else None."""
    r = math.isqrt(m)
    return r if r * r == m else None


class ExactScalar:
    """An element x + y*sqrt(m) with x, y rational and m a positive integer.

    When m is a perfect square the irrational part is folded into the
    rational part at construction, so representations are canonical and
    equality / ordering are decidable by exact integer arithmetic.
    """

    __slots__ = ("x", "y", "m")

    def __init__(self, x=0, y=0, m: int = 3):
        if m <= 0:
            raise ValueError("radicand must be a positive integer")
        x = Fraction(x)
        y = Fraction(y)
        r = _isqrt_exact(m)
        if r is not None and y:
            x, y = x + y * r, Fraction(0)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "m", m)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def sqrt_power(cls, m: int, half_exponent: int) -> "ExactScalar":
        """Return sqrt(m)**half_exponent exactly (half_exponent may be negative)."""
        e, rem = divmod(half_exponent, 2)
        # sqrt(m)^(2e+rem) = m^e * sqrt(m)^rem with e possibly negative.
        rat = Fraction(m) ** e
        if rem == 0:
            return cls(rat, 0, m)
        return cls(0, rat, m)

    def __setattr__(self, *_):
        raise AttributeError("ExactScalar is immutable")

    # -- ring operations ------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, ExactScalar):
            if other.m != self.m:
                if other.y == 0:
                    return ExactScalar(other.x, 0, self.m)
                if self.y == 0:
                    raise TypeError(
                        f"mixed radicands {self.m} and {other.m}")
                raise TypeError(f"mixed radicands {self.m} and {other.m}")
            return other
        if isinstance(other, (int, Rational)):
            return ExactScalar(other, 0, self.m)
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return ExactScalar(self.x + o.x, self.y + o.y, self.m)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return ExactScalar(self.x - o.x, self.y - o.y, self.m)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return ExactScalar(o.x - self.x, o.y - self.y, self.m)

    def __neg__(self):
        return ExactScalar(-self.x, -self.y, self.m)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return ExactScalar(
            self.x * o.x + self.y * o.y * self.m,
            self.x * o.y + self.y * o.x,
            self.m,
        )

    __rmul__ = __mul__

    def inverse(self) -> "ExactScalar":
        norm = self.x * self.x - self.y * self.y * self.m
        if norm == 0:
            raise ZeroDivisionError("division by zero scalar")
        return ExactScalar(self.x / norm, -self.y / norm, self.m)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o * self.inverse()

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return self.inverse() ** (-n)
        result = ExactScalar(1, 0, self.m)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    # -- order and equality ---------------------------------------------------

    def _sign(self) -> int:
        """Exact sign of x + y*sqrt(m)."""
        x, y = self.x, self.y
        if y == 0:
            return (x > 0) - (x < 0)
        if x == 0:
            return 1 if y > 0 else -1
        if x > 0 and y > 0:
            return 1
        if x < 0 and y < 0:
            return -1
        # Opposite signs: compare x^2 with y^2 * m.
        lhs = x * x
        rhs = y * y * self.m
        if x > 0:  # y < 0
            return (lhs > rhs) - (lhs < rhs)
        return (rhs > lhs) - (rhs < lhs)

    def __eq__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self.x == o.x and self.y == o.y

    def __hash__(self):
        if self.y == 0:
            return hash(self.x)
        return hash((self.x, self.y, self.m))

    def __lt__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o)._sign() < 0

    def __le__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o)._sign() <= 0

    def __gt__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o)._sign() > 0

    def __ge__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return (self - o)._sign() >= 0

    def __bool__(self):
        return bool(self.x) or bool(self.y)

    # -- misc -----------------------------------------------------------------

    def conjugate(self) -> "ExactScalar":
        return ExactScalar(self.x, -self.y, self.m)

    @property
    def is_rational(self) -> bool:
        return self.y == 0

    def as_fraction(self) -> Fraction:
        if self.y != 0:
            raise ValueError(f"{self!r} is irrational")
        return self.x

    def sqrt(self) -> "ExactScalar":
        """Exact square root, supported when self = q^2 * m^j for rational q.

        Covers every value the tree model takes square roots of (cell
        measures and visual weights, all of the form rational * m^j).
        """
        if self._sign() < 0:
            raise ValueError("square root of negative scalar")
        if self.y == 0:
            f = self.x
            num_r = _isqrt_exact(f.numerator)
            den_r = _isqrt_exact(f.denominator)
            if num_r is not None and den_r is not None:
                return ExactScalar(Fraction(num_r, den_r), 0, self.m)
            # try rational * m: self = (q*sqrt(m))^2 => q^2 = self / m
            g = f / self.m
            num_r = _isqrt_exact(g.numerator)
            den_r = _isqrt_exact(g.denominator)
            if num_r is not None and den_r is not None:
                return ExactScalar(0, Fraction(num_r, den_r), self.m)
        raise ValueError(f"no exact square root for {self!r}")

    def to_float(self) -> float:
        return float(self.x) + float(self.y) * math.sqrt(self.m)

    __float__ = to_float

    def decimal_str(self, sig: int = 17) -> str:
        """Correctly rounded decimal string with `sig` significant digits.

        Rational values are rounded exactly; irrational ones via 60-digit
        guard precision (round-half-even), far beyond any tie this package
        can produce.
        """
        with decimal.localcontext() as ctx:
            ctx.prec = max(60, sig + 20)
            d = decimal.Decimal(self.x.numerator) / decimal.Decimal(self.x.denominator)
            if self.y:
                s = decimal.Decimal(self.m).sqrt()
                d += s * decimal.Decimal(self.y.numerator) / decimal.Decimal(self.y.denominator)
            if d == 0:
                return "0"
            ctx.prec = sig
            d = +d  # round to sig significant digits, half-even
        return format(d, "f")

    def __repr__(self):
        if self.y == 0:
            return f"ExactScalar({self.x})"
        return f"ExactScalar({self.x} + {self.y}*sqrt({self.m}))"

    def __str__(self):
        if self.y == 0:
            return str(self.x)
        if self.x == 0:
            return f"{self.y}*sqrt({self.m})"
        sign = "+" if self.y > 0 else "-"
        return f"{self.x} {sign} {abs(self.y)}*sqrt({self.m})"


def exact_str(value) -> str:
    """Render an exact value (Fraction / int / ExactScalar) losslessly."""
    if isinstance(value, ExactScalar):
        return str(value)
    return str(Fraction(value))
