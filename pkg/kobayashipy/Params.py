#!/usr/bin/env python
# -*-coding:utf-8 -*-

import json
import logging
import warnings
from dataclasses import dataclass, replace
from types import SimpleNamespace

from mpmath import mp, mpf

from kobayashipy.exceptions import DomainError, NoRoot, UnderflowError
from kobayashipy.utils import ScaledReal, utils

logger = logging.getLogger(__name__)

SEQUENCES = ("a", "r", "b", "eps", "A", "delta", "d", "r_tilde", "C", "c", "K")


@dataclass(frozen=True)
class RootBracket:
    """Sign bracket certifying the smallest positive root of the b_n equation.

    f(lo) < 0 <= f(hi); ``scan_steps`` geometric grid steps (ratio 1.2) were
    taken down from b* before the sign changed, then ``iterations`` bisection
    steps shrank the bracket.
    """

    lo: mpf
    hi: mpf
    f_lo: mpf
    f_hi: mpf
    scan_steps: int
    iterations: int

    @property
    def root(self):
        return (self.lo + self.hi) / 2

    def to_dict(self):
        return {"lo": utils.encode(self.lo), "hi": utils.encode(self.hi),
                "scan_steps": self.scan_steps, "iterations": self.iterations}


@dataclass(frozen=True)
class ParamTable:
    """The coupled sequences of the construction, indexed by n.

    Every sequence is a tuple whose entry n is the n-th term. Index 0 holds
    r_0 = 1/4 and delta_0 = 1/2 and None elsewhere; ``a`` and ``r`` run to
    n_max + 1 because r_tilde_n = r_{n+1}^3. C, c and K stay None until the
    cusp extension fills them.
    """

    n_max: int
    precision_bits: int
    a: tuple
    r: tuple
    b: tuple
    eps: tuple
    A: tuple
    delta: tuple
    d: tuple
    r_tilde: tuple
    C: tuple
    c: tuple
    K: tuple
    brackets: tuple

    def indices(self):
        return range(1, self.n_max + 1)

    def has_levi_constants(self):
        return all(self.K[n] is not None for n in self.indices())

    def with_levi_constants(self, C, c, K):
        """Return a copy with the Levi constants filled.

        Parameters
        ----------
        C, c, K : mapping
            n -> value for n = 1..n_max
        """
        pad = lambda m: (None,) + tuple(m[n] for n in self.indices())
        return replace(self, C=pad(C), c=pad(c), K=pad(K))

    def to_dict(self):
        out = {"n_max": self.n_max, "precision_bits": self.precision_bits}
        for name in SEQUENCES:
            out[name] = [utils.encode(x) for x in getattr(self, name)]
        out["b_bracket"] = [None if br is None else br.to_dict() for br in self.brackets]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, data):
        bits = int(data["precision_bits"])
        with utils.precision(bits):
            seqs = {name: tuple(utils.decode(x) for x in data[name]) for name in SEQUENCES}
            brackets = [None]
            for n, br in enumerate(data["b_bracket"][1:], start=1):
                lo, hi = utils.decode(br["lo"]), utils.decode(br["hi"])
                a_n = seqs["a"][n]
                brackets.append(RootBracket(lo, hi, Params.b_equation(lo, a_n),
                                            Params.b_equation(hi, a_n),
                                            int(br["scan_steps"]), int(br["iterations"])))
        return cls(n_max=int(data["n_max"]), precision_bits=bits, brackets=tuple(brackets), **seqs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class Params:
    """
    Scalar sequences of the construction: radii, roots b_n, term bounds A_k,
    weights delta_k, mollifier radii and the cusp tube widths.
    """

    R0 = mpf(1) / 4
    DELTA0 = mpf(1) / 2
    SCAN_RATIO = "1.2"
    MIN_BITS = 256

    @staticmethod
    def next_radius(a_n, r_prev):
        """One step of the radius recursion r_n = a_n^{-1} r_{n-1}^2.

        Parameters
        ----------
        a_n : mpf
            growth rate, at least 4
        r_prev : mpf
            previous radius in (0, 1/4]

        Returns
        -------
        mpf
            r_n, smaller than r_prev/16
        """
        a_n, r_prev = mpf(a_n), mpf(r_prev)
        if a_n < 4:
            raise DomainError("a_n must be at least 4, got {}".format(a_n))
        if not 0 < r_prev <= Params.R0:
            raise DomainError("r_prev must lie in (0, 1/4], got {}".format(r_prev))
        return r_prev ** 2 / a_n

    @staticmethod
    def b_equation(b, a_n):
        """f(b) = 1/8 - b + log(b) / (4 log a_n)."""
        b = mpf(b)
        return mpf(1) / 8 - b + mp.log(b) / (4 * mp.log(mpf(a_n)))

    @staticmethod
    def existence_margin(a_n):
        """f(b*) at the critical point b* = 1/(4 log a_n); a root exists iff positive."""
        L = mp.log(mpf(a_n))
        return mpf(1) / 8 - (1 + mp.log(4 * L)) / (4 * L)

    @staticmethod
    def solve_b(a_n, full_output=False):
        """Smallest positive root of 1/8 - b + log(b)/(4 log a_n) = 0.

        f increases on (0, b*) and has its maximum at b* = 1/(4 log a_n); the
        root is bracketed by a geometric scan down from b* and refined by
        bisection to the working precision.

        Parameters
        ----------
        a_n : mpf
            growth rate
        full_output : bool, optional
            also return the RootBracket, by default False

        Returns
        -------
        mpf or (mpf, RootBracket)
            b_n, with b_n < b* <= 1/8
        """
        a_n = mpf(a_n)
        if a_n <= 1:
            raise DomainError("a_n must exceed 1, got {}".format(a_n))
        if Params.existence_margin(a_n) <= 0:
            raise NoRoot("no positive root of the b_n equation for a_n = {}; "
                         "increase a_1".format(mp.nstr(a_n, 10)))
        L = mp.log(a_n)
        f = lambda b: Params.b_equation(b, a_n)
        ratio = mpf(Params.SCAN_RATIO)

        hi = 1 / (4 * L)
        f_hi = f(hi)
        lo = hi / ratio
        f_lo = f(lo)
        steps = 1
        while f_lo >= 0:
            hi, f_hi = lo, f_lo
            lo = lo / ratio
            f_lo = f(lo)
            steps += 1

        tol = mpf(2) ** (-(mp.prec - 8))
        iterations = 0
        while hi - lo > tol * hi:
            mid = (lo + hi) / 2
            f_mid = f(mid)
            if f_mid < 0:
                lo, f_lo = mid, f_mid
            else:
                hi, f_hi = mid, f_mid
            iterations += 1

        bracket = RootBracket(lo, hi, f_lo, f_hi, steps, iterations)
        if full_output:
            return bracket.root, bracket
        return bracket.root

    @staticmethod
    def newton_b(a_n, x0, maxiter=200):
        """Newton iteration on the b_n equation, used as an independent oracle.

        f is increasing and concave on (0, b*), so starting to the left of the
        root the iterates increase monotonically to it. mpmath's findroot
        raises ValueError when the iteration does not converge.
        """
        a_n = mpf(a_n)
        L = mp.log(a_n)
        f = lambda b: Params.b_equation(b, a_n)
        df = lambda b: -1 + 1 / (4 * L * b)
        return mp.findroot(f, mpf(x0), solver="newton", df=df, maxsteps=maxiter)

    @staticmethod
    def term_bound(k, table):
        """A_k = 1/2 + a_k/r_k + log(1/r_k)/(4 log a_k)."""
        a_k, r_k = mpf(table.a[k]), mpf(table.r[k])
        return mpf(1) / 2 + a_k / r_k + mp.log(1 / r_k) / (4 * mp.log(a_k))

    @staticmethod
    def next_delta(delta_prev, A_k, k, a_k, r_k):
        """delta_k = min(delta_{k-1} / (A_k 2^k), r_k^k / (1 + a_k)).

        The first term is the weight recursion of the series, the second the
        flatness constraint delta_k (1 + a_k) <= r_k^k.
        """
        delta_prev, A_k = mpf(delta_prev), mpf(A_k)
        if not 0 < delta_prev < 1:
            raise DomainError("delta_prev must lie in (0, 1), got {}".format(delta_prev), index=k)
        if A_k <= 0:
            raise DomainError("A_k must be positive", index=k)
        recursion = delta_prev / (A_k * mpf(2) ** k)
        flatness = mpf(r_k) ** k / (1 + mpf(a_k))
        delta = min(recursion, flatness)
        if delta == 0:
            raise UnderflowError("delta_k rounded to zero at {} bits".format(mp.prec), index=k)
        return delta

    @staticmethod
    def mollifier_radius(n, table):
        """eps_n = min(r_n/4, largest eps with eps + log(1+eps/r_n)/(4 log a_n) <= 1/8)."""
        r, L = mpf(table.r[n]), mp.log(mpf(table.a[n]))
        eighth = mpf(1) / 8
        g = lambda e: e + mp.log1p(e / r) / (4 * L)
        cap = r / 4
        if g(cap) <= eighth:
            return cap
        lo, hi = mpf(0), cap
        tol = mpf(2) ** (-(mp.prec - 8))
        while hi - lo > tol * hi:
            mid = (lo + hi) / 2
            if g(mid) <= eighth:
                lo = mid
            else:
                hi = mid
        return lo

    @staticmethod
    def _token(tok):
        tok = tok.strip()
        if tok.startswith("e"):
            return mp.exp(mpf(tok[1:]))
        return mpf(tok)

    @staticmethod
    def growth_rule(spec):
        """Parse a growth rule string into a callable n -> a_n.

        ``exp:c`` gives a_n = e^{c+n}; ``const:e9`` or ``const:5000`` a
        constant; ``list:e11,e12,...`` a user table. Malformed numbers raise
        ValueError here; values are computed at the caller's precision.
        """
        kind, _, arg = spec.partition(":")
        if kind == "exp":
            c = mpf(arg or 10)
            return lambda n: mp.exp(c + n)
        if kind == "const":
            Params._token(arg)
            return lambda n: Params._token(arg)
        if kind == "list":
            values = [tok for tok in arg.split(",") if tok.strip()]
            if not values:
                raise ValueError("empty growth table {!r}".format(spec))
            for tok in values:
                Params._token(tok)

            def rule(n):
                if n > len(values):
                    raise DomainError("growth table has only {} entries".format(len(values)), index=n)
                return Params._token(values[n - 1])
            return rule
        raise ValueError("unknown growth rule {!r}".format(spec))

    @staticmethod
    def build_table(a_spec="exp:10", n_max=4, precision_bits=512):
        """Build every sequence for n = 1..n_max.

        Parameters
        ----------
        a_spec : str or callable
            growth rule string (see growth_rule) or callable n -> a_n
        n_max : int
            number of indices
        precision_bits : int
            mpmath mantissa bits, at least 256

        Returns
        -------
        ParamTable
            with C, c, K unset
        """
        if n_max < 1:
            raise DomainError("n_max must be positive")
        if precision_bits < Params.MIN_BITS:
            raise DomainError("precision_bits must be at least {}".format(Params.MIN_BITS))
        rule = a_spec if callable(a_spec) else Params.growth_rule(a_spec)

        with utils.precision(precision_bits):
            a, r = [None], [+Params.R0]
            b, eps, A, brackets = [None], [None], [None], [None]
            delta = [+Params.DELTA0]
            partial = SimpleNamespace(a=a, r=r)
            for n in range(1, n_max + 2):
                a_n = mpf(rule(n))
                if a_n < 4:
                    raise DomainError("a_n must be at least 4, got {}".format(a_n), index=n)
                if n > 1 and a_n <= a[n - 1]:
                    raise DomainError("growth rates must increase strictly", index=n)
                a.append(a_n)
                r.append(Params.next_radius(a_n, r[n - 1]))
                if n > n_max:
                    break
                try:
                    b_n, bracket = Params.solve_b(a_n, full_output=True)
                except NoRoot as exc:
                    raise NoRoot(str(exc), index=n) from exc
                if n == 1 and a_n < mp.exp(10):
                    warnings.warn("a_1 = {} is below e^10; the b_1 root exists but with little margin"
                                  .format(mp.nstr(a_n, 8)))
                if 2 * r[n] > b_n:
                    raise DomainError("2 r_n exceeds b_n, R_n would not vanish near 0", index=n)
                b.append(b_n)
                brackets.append(bracket)
                A.append(Params.term_bound(n, partial))
                delta.append(Params.next_delta(delta[n - 1], A[n], n, a_n, r[n]))
                eps.append(Params.mollifier_radius(n, partial))
                logger.debug("n=%d a=%s r=%s b=%s delta=%s", n, mp.nstr(a_n, 6),
                             mp.nstr(r[n], 6), mp.nstr(b_n, 6), mp.nstr(delta[n], 6))

            r_tilde = [None] + [r[n + 1] ** 3 for n in range(1, n_max + 1)]
            d = [None] + [rt ** 2 for rt in r_tilde[1:]]

        logger.info("built parameter table n_max=%d at %d bits", n_max, precision_bits)
        empty = (None,) * (n_max + 1)
        return ParamTable(n_max=n_max, precision_bits=precision_bits, a=tuple(a), r=tuple(r),
                          b=tuple(b), eps=tuple(eps), A=tuple(A), delta=tuple(delta),
                          d=tuple(d), r_tilde=tuple(r_tilde), C=empty, c=empty, K=empty,
                          brackets=tuple(brackets))

    @staticmethod
    def tail_sum(n, table):
        """sum_{k=n+1}^{n_max} delta_k A_k over the stored terms."""
        return mp.fsum(table.delta[k] * table.A[k] for k in range(n + 1, table.n_max + 1))

    @staticmethod
    def check_table(table, scan_points=200):
        """Re-evaluate the table invariants from the stored values.

        Returns
        -------
        dict
            invariant name -> bool
        """
        checks = {}
        with utils.precision(table.precision_bits):
            idx = list(table.indices())
            rel = mpf(2) ** (-(table.precision_bits - 8))
            eighth = mpf(1) / 8
            ratio = mpf(Params.SCAN_RATIO)

            checks["a_increasing"] = all(table.a[n] < table.a[n + 1] for n in idx) and \
                all(table.a[n] >= 4 for n in idx)
            checks["radius_recursion"] = all(
                abs(table.r[n] - table.r[n - 1] ** 2 / table.a[n]) <= rel * table.r[n]
                for n in range(1, table.n_max + 2))
            checks["radius_contraction"] = all(
                table.r[n + 1] < table.r[n] ** 2 / table.a[n] <= table.r[n] ** 2 for n in idx)

            brackets_ok, smallest_ok, newton_ok = True, True, True
            for n in idx:
                br, a_n = table.brackets[n], table.a[n]
                f = lambda x: Params.b_equation(x, a_n)
                brackets_ok &= bool(f(br.lo) < 0 <= f(br.hi))
                brackets_ok &= bool(abs(f(table.b[n])) <= mpf(10) ** -12)
                x = br.lo
                for _ in range(scan_points):
                    x = x / ratio
                    smallest_ok &= bool(f(x) < 0)
                newton = Params.newton_b(a_n, br.lo)
                newton_ok &= bool(abs(newton - table.b[n]) <= mpf(10) ** -12 * table.b[n])
            checks["b_bracket"] = brackets_ok
            checks["b_smallest_root"] = smallest_ok
            checks["b_newton_agreement"] = newton_ok
            checks["b_decreasing"] = all(0 < table.b[n] <= eighth for n in idx) and \
                all(table.b[n] > table.b[n + 1] for n in idx[:-1])
            checks["zero_region"] = all(2 * table.r[n] <= table.b[n] for n in idx)

            def g(n):
                e, r_n = table.eps[n], table.r[n]
                return e + mp.log1p(e / r_n) / (4 * mp.log(table.a[n]))
            checks["mollifier_radius"] = all(
                table.eps[n] < table.r[n] / 2 and g(n) <= eighth for n in idx)

            checks["delta_recursion"] = all(
                table.delta[n] <= table.delta[n - 1] / (table.A[n] * mpf(2) ** n)
                and 0 < table.delta[n] < 1 for n in idx)
            checks["delta_flatness"] = all(
                ScaledReal.from_value(table.delta[n]) * (1 + table.a[n])
                <= ScaledReal.from_value(table.r[n]) ** n * (1 + rel) for n in idx)
            checks["tail_sum"] = all(Params.tail_sum(n, table) <= table.delta[n] / 2 for n in idx)
            checks["cusp_radii"] = all(
                table.r_tilde[n] == table.r[n + 1] ** 3
                and table.d[n] <= (3 * table.r_tilde[n] / 4) ** mpf(1.5) / 4 for n in idx)
        return checks
