#!/usr/bin/env python
# -*-coding:utf-8 -*-

# scaled reals, precision contexts and exact serialization

import functools
import math
import os
import tempfile

import mpmath
from mpmath import mp, mpf


@functools.total_ordering
class ScaledReal:
    """Real number stored as a sign and the natural logarithm of its magnitude.

    Magnitudes far below the double precision range (r_4^4 is below 1e-300 for
    the default growth rule) stay representable, and products and powers are
    exact sums of logarithms.

    Parameters
    ----------
    sign : int
        -1, 0 or +1
    log_mag : mpf
        natural log of the magnitude, ignored when sign is 0
    """

    __slots__ = ("sign", "log_mag")

    def __init__(self, sign, log_mag):
        if sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1, got {}".format(sign))
        self.sign = int(sign)
        self.log_mag = mpf("-inf") if self.sign == 0 else mpf(log_mag)

    @classmethod
    def from_value(cls, x):
        """Convert a real number (int, float, str or mpf)."""
        if isinstance(x, ScaledReal):
            return x
        x = mpf(x)
        if not mp.isfinite(x):
            raise ValueError("ScaledReal needs a finite value, got {}".format(x))
        if x == 0:
            return cls(0, 0)
        return cls(1 if x > 0 else -1, mp.log(abs(x)))

    @classmethod
    def from_log(cls, log_mag, sign=1):
        return cls(sign, log_mag)

    def value(self):
        """Return the number as an mpf at the current working precision."""
        if self.sign == 0:
            return mpf(0)
        return self.sign * mp.exp(self.log_mag)

    def log10(self):
        if self.sign == 0:
            return mpf("-inf")
        return self.log_mag / mp.log(10)

    def __mul__(self, other):
        other = ScaledReal.from_value(other)
        if self.sign == 0 or other.sign == 0:
            return ScaledReal(0, 0)
        return ScaledReal(self.sign * other.sign, self.log_mag + other.log_mag)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = ScaledReal.from_value(other)
        if other.sign == 0:
            raise ZeroDivisionError("division of a ScaledReal by zero")
        if self.sign == 0:
            return ScaledReal(0, 0)
        return ScaledReal(self.sign * other.sign, self.log_mag - other.log_mag)

    def __rtruediv__(self, other):
        return ScaledReal.from_value(other) / self

    def __pow__(self, k):
        if self.sign == 0:
            if k <= 0:
                raise ZeroDivisionError("0 to a non-positive power")
            return ScaledReal(0, 0)
        if self.sign < 0 and int(k) != k:
            raise ValueError("fractional power of a negative ScaledReal")
        sign = 1 if self.sign > 0 or int(k) % 2 == 0 else -1
        return ScaledReal(sign, self.log_mag * k)

    def __neg__(self):
        return ScaledReal(-self.sign, self.log_mag)

    def __abs__(self):
        return ScaledReal(abs(self.sign), self.log_mag)

    def __add__(self, other):
        other = ScaledReal.from_value(other)
        if other.sign == 0:
            return self
        if self.sign == 0:
            return other
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        ratio = mp.exp(small.log_mag - big.log_mag)
        if big.sign == small.sign:
            return ScaledReal(big.sign, big.log_mag + mp.log1p(ratio))
        if ratio == 1:
            return ScaledReal(0, 0)
        return ScaledReal(big.sign, big.log_mag + mp.log1p(-ratio))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-ScaledReal.from_value(other))

    def __rsub__(self, other):
        return ScaledReal.from_value(other) - self

    def _key(self):
        # order by sign, then by magnitude with the sign's orientation
        if self.sign == 0:
            return (0, mpf(0))
        return (self.sign, self.sign * self.log_mag)

    def __eq__(self, other):
        try:
            other = ScaledReal.from_value(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other):
        other = ScaledReal.from_value(other)
        return self._key() < other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        if self.sign == 0:
            return "ScaledReal(0)"
        return "ScaledReal({}e^{})".format("-" if self.sign < 0 else "+",
                                           mpmath.nstr(self.log_mag, 17))


class utils:
    """
    Precision contexts, exact serialization of mpf values and file helpers.
    """

    @staticmethod
    def precision(bits):
        """Context manager running mpmath at ``bits`` mantissa bits."""
        return mp.workprec(int(bits))

    @staticmethod
    def at_least(bits):
        """Like :meth:`utils.precision` but never lowers an enclosing precision."""
        return mp.workprec(max(mp.prec, int(bits)))

    @staticmethod
    def digits(bits):
        """Decimal digits carried by a binary mantissa of ``bits`` bits."""
        return max(1, int(bits * math.log10(2)))

    @staticmethod
    def encode(x):
        """Encode an mpf as a [decimal mantissa string, binary exponent] pair.

        The pair is exact: decoding at any precision at least the writing
        precision gives back the same number bit for bit. None encodes None.
        """
        if x is None:
            return None
        x = mpf(x)
        if not mp.isfinite(x):
            raise ValueError("cannot encode non-finite value {}".format(x))
        sign, man, exp, _ = x._mpf_
        if not man:
            return ["0", 0]
        return [str(-man if sign else man), int(exp)]

    @staticmethod
    def decode(pair):
        """Inverse of :meth:`utils.encode`."""
        if pair is None:
            return None
        man, exp = pair
        return mpf((int(man), int(exp)))

    @staticmethod
    def sci(x, bits):
        """Scientific-notation decimal string carrying the digits of ``bits`` bits."""
        if x is None:
            return ""
        return mpmath.nstr(mpf(x), utils.digits(bits), min_fixed=0, max_fixed=0)

    @staticmethod
    def atomic_write(path, text):
        """Write ``text`` to ``path`` through a temporary file and a rename."""
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
