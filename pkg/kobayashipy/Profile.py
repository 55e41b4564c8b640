#!/usr/bin/env python
# -*-coding:utf-8 -*-

import functools
import logging
from dataclasses import dataclass

import numpy as np
from mpmath import mp, mpc, mpf
from scipy.integrate import quad as scipy_quad
from scipy.special import roots_legendre

from kobayashipy.exceptions import QuadratureError
from kobayashipy.utils import utils

logger = logging.getLogger(__name__)

# absolute error admitted on a normalized kernel average of O(1) values
QUAD_TOL = 1e-12
MIN_NODES = 64


def _bump(rho):
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1
    out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    """Radial bump exp(-1/(1-|w|^2)) on the unit disc with its polar node table.

    Gauss-Legendre nodes in the radius times a trapezoid rule in the angle.
    ``weights`` are normalized by the quadrature mass ``m``, so they sum to 1
    and the kernel is a probability measure on the nodes.
    """

    radial: int
    angular: int
    offsets: np.ndarray
    shifted: np.ndarray
    weights: np.ndarray
    m: float
    m_ref: float

    @property
    def mass_error(self):
        return abs(self.m - self.m_ref) / self.m_ref

    @staticmethod
    def profile(rho):
        return _bump(rho)

    @classmethod
    def build(cls, radial=MIN_NODES, angular=None):
        """Build the node table.

        Parameters
        ----------
        radial : int
            Gauss-Legendre nodes on [0, 1], at least 64
        angular : int, optional
            trapezoid nodes on [0, 2 pi), by default equal to radial

        Returns
        -------
        MollifierKernel
        """
        angular = radial if angular is None else angular
        if radial < MIN_NODES or angular < MIN_NODES:
            raise QuadratureError("quadrature needs at least {0}x{0} nodes, got {1}x{2}"
                                  .format(MIN_NODES, radial, angular))
        x, w = roots_legendre(radial)
        rho, w_rho = (x + 1) / 2, w / 2
        theta = 2 * np.pi * (np.arange(angular) + 0.5) / angular
        half = np.pi / angular

        R, T = np.meshgrid(rho, theta, indexing="ij")
        W = np.outer(w_rho * rho * _bump(rho), np.full(angular, 2 * np.pi / angular))
        m = float(W.sum())
        m_ref = 2 * np.pi * scipy_quad(lambda s: s * float(_bump(np.array([s]))[0]), 0, 1,
                                       epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        kernel = cls(radial=radial, angular=angular,
                     offsets=(R * np.exp(1j * T)).ravel(),
                     shifted=(R * np.exp(1j * (T + half))).ravel(),
                     weights=(W / m).ravel(), m=m, m_ref=m_ref)
        if kernel.mass_error > 1e-9:
            raise QuadratureError("kernel mass {} disagrees with reference {}".format(m, m_ref))
        return kernel

    @classmethod
    @functools.lru_cache(maxsize=8)
    def default(cls, quad=MIN_NODES):
        return cls.build(quad, quad)

    def convolve(self, f, z, eps):
        """Average of a vectorized f over the disc of radius eps around z.

        Nodes where f is not finite are moved by half an angular spacing.
        """
        z = complex(z)
        pts = z + eps * self.offsets
        with np.errstate(all="ignore"):
            vals = np.asarray(f(pts), dtype=float)
            bad = ~np.isfinite(vals)
            if bad.any():
                vals = vals.copy()
                vals[bad] = np.asarray(f((z + eps * self.shifted)[bad]), dtype=float)
        if not np.isfinite(vals).all():
            raise QuadratureError("integrand is not finite near {}".format(z))
        return float(np.dot(self.weights, vals))


@dataclass(frozen=True)
class TailInterval:
    """Truncated series value with a bound on the omitted tail.

    The full series lies in [value, value + tail_hi].
    """

    value: mpf
    tail_hi: mpf

    @property
    def upper(self):
        return self.value + self.tail_hi

    def to_dict(self):
        return {"value": utils.encode(self.value),
                "tail_hi": None if mp.isinf(self.tail_hi) else utils.encode(self.tail_hi)}


class Profile:
    """
    One-variable function stack: u_n, the kinked R_n, its mollification,
    the rescaled rho_n and the weighted series rho.
    """

    @staticmethod
    def u(z, a_n):
        """u_n(z) = 1/8 - Re z + log|z| / (4 log a_n), -inf at the origin.

        Parameters
        ----------
        z : complex or mpc
            point of the plane
        a_n : mpf
            growth rate, greater than 1

        Returns
        -------
        mpf
            value of u_n
        """
        z = mpc(z)
        if z == 0:
            return mpf("-inf")
        return mpf(1) / 8 - z.real + mp.log(abs(z)) / (4 * mp.log(mpf(a_n)))

    @staticmethod
    def R(z, a_n, b_n):
        """max(u_n, 0) for Re z <= b_n and u_n beyond."""
        z = mpc(z)
        value = Profile.u(z, a_n)
        if z.real <= b_n:
            return max(value, mpf(0))
        return value

    @staticmethod
    def oscillation_bound(n, table, z):
        """Bound on |u_n(z - eps_n w) - u_n(z)| over |w| <= 1.

        Returns +inf when the disc of radius eps_n around z reaches the origin.
        """
        eps, r = table.eps[n], abs(mpc(z))
        if r <= eps:
            return mpf("inf")
        return eps - mp.log1p(-eps / r) / (4 * mp.log(table.a[n]))

    @staticmethod
    def R_smooth(z, n, table, quad=MIN_NODES, kernel=None):
        """Mollification of R_n by the kernel scaled to radius eps_n.

        Exact values are returned without quadrature where the disc of
        radius eps_n around z sees a single branch of R_n: 0 near the
        origin and where R_n vanishes on the whole disc, u_n(z) where R_n
        is harmonic on it.

        Parameters
        ----------
        z : complex or mpc
            point of the plane
        n : int
            index into the table
        table : ParamTable
            parameter table
        quad : int, optional
            node count per axis, by default 64
        kernel : MollifierKernel, optional
            prebuilt node table, by default the cached table for ``quad``

        Returns
        -------
        mpf
            value of the mollified R_n
        """
        kernel = kernel or MollifierKernel.default(quad)
        with utils.at_least(table.precision_bits):
            z = mpc(z)
            r_n, eps, b = table.r[n], table.eps[n], table.b[n]
            if abs(z) < r_n:
                return mpf(0)
            u0 = Profile.u(z, table.a[n])
            bound = Profile.oscillation_bound(n, table, z)
            if z.real - eps > b or u0 - bound >= 0:
                return u0
            if z.real + eps <= b and u0 + bound <= 0:
                return mpf(0)

            L = float(mp.log(table.a[n]))
            x = complex(eps / z) * kernel.offsets
            du = float(eps) * kernel.offsets.real + np.log1p(-2 * x.real + (x * x.conjugate()).real) / (8 * L)
            left = float(z.real - b) - float(eps) * kernel.offsets.real <= 0
            vals = float(u0) + du
            vals = np.where(left, np.maximum(vals, 0.0), vals)
            return mpf(float(np.dot(kernel.weights, vals)))

    @staticmethod
    def rho_k(z, k, table, quad=MIN_NODES, kernel=None):
        """rho_k(z) = R_smooth(a_k z / r_k, k).

        Exactly 0 on |z| < r_k^2 / a_k, which contains |z| < r_{k+1}.
        """
        with utils.at_least(table.precision_bits):
            z = mpc(z)
            if abs(z) < table.r[k] ** 2 / table.a[k]:
                return mpf(0)
            w = table.a[k] * z / table.r[k]
            return Profile.R_smooth(w, k, table, quad, kernel)

    @staticmethod
    def tail_bound(z, table, n_terms=None):
        """Bound on sum_{k > N} delta_k rho_k(z), N = n_terms or n_max."""
        N = table.n_max if n_terms is None else n_terms
        with utils.at_least(table.precision_bits):
            return table.delta[N] / 2 * max(mpf(1), 2 * abs(mpc(z)))

    @staticmethod
    def rho(z, table, quad=MIN_NODES, kernel=None, n_terms=None):
        """Truncated series sum_{k<=N} delta_k rho_k(z) with its tail bound.

        Parameters
        ----------
        z : complex or mpc
            point of the plane
        table : ParamTable
            parameter table
        quad : int, optional
            node count per axis
        kernel : MollifierKernel, optional
            prebuilt node table
        n_terms : int, optional
            truncation index N, by default n_max

        Returns
        -------
        TailInterval
            value and tail_hi = delta_N/2 (times 2|z| beyond the unit disc)
        """
        N = table.n_max if n_terms is None else n_terms
        with utils.at_least(table.precision_bits):
            z = mpc(z)
            value = mp.fsum(table.delta[k] * Profile.rho_k(z, k, table, quad, kernel)
                            for k in range(1, N + 1))
            return TailInterval(value, Profile.tail_bound(z, table, N))

    @staticmethod
    def harmonic_reproduction(kernel, points=100, eps=0.05, seed=0, tol=1e-8):
        """Convolve Re z, Im z, Re z^2 and Im z^2 and compare with the values at the centres.

        Returns
        -------
        dict
            max error per test function, tolerance and a pass flag
        """
        rng = np.random.default_rng(seed)
        radius = np.sqrt(rng.uniform(0, 1, points))
        centres = radius * np.exp(2j * np.pi * rng.uniform(0, 1, points))
        tests = {"re_z": lambda p: p.real, "im_z": lambda p: p.imag,
                 "re_z2": lambda p: (p ** 2).real, "im_z2": lambda p: (p ** 2).imag}
        errors = {}
        for name, f in tests.items():
            errors[name] = max(abs(kernel.convolve(f, c, eps) - float(f(np.array([c]))[0]))
                               for c in centres)
        return {"max_error": errors, "tol": tol, "points": points, "eps": eps, "seed": seed,
                "mass_error": kernel.mass_error,
                "passed": all(e <= tol for e in errors.values())}

    @staticmethod
    def annulus_points(inner, outer, count):
        """Deterministic points with log-spaced radii in [inner, outer] and rotating angles."""
        inner, outer = mpf(inner), mpf(outer)
        rings = max(1, int(round(count ** 0.5)))
        per = max(1, count // rings)
        pts = []
        golden = (mp.sqrt(5) - 1) / 2
        for i in range(rings):
            t = mpf(i) / max(rings - 1, 1)
            rad = inner * (outer / inner) ** t
            for j in range(per):
                pts.append(rad * mp.expjpi(2 * ((mpf(j) / per + i * golden) % 1)))
        return pts

    @staticmethod
    def sandwich(n, table, points, quad=MIN_NODES, kernel=None):
        """Range of R_smooth - R over the given points of the scaled plane.

        Returns
        -------
        dict
            min and max difference, pass flag against [-1e-6, 1/8 + 1e-6]
        """
        with utils.at_least(table.precision_bits):
            diffs = [Profile.R_smooth(z, n, table, quad, kernel) - Profile.R(z, table.a[n], table.b[n])
                     for z in points]
            lo, hi = min(diffs), max(diffs)
            passed = bool(lo >= -mpf(10) ** -6 and hi <= mpf(1) / 8 + mpf(10) ** -6)
        return {"n": n, "min": lo, "max": hi, "samples": len(diffs), "passed": passed}

    @staticmethod
    def R_upper_bound_check(n, table, points, quad=MIN_NODES, kernel=None):
        """Minimum margins of R_n <= 3/8 - Re z and R_smooth <= 1/2 - Re z on |z| < a_n."""
        with utils.at_least(table.precision_bits):
            raw, smooth = [], []
            for z in points:
                z = mpc(z)
                if abs(z) >= table.a[n]:
                    continue
                raw.append(mpf(3) / 8 - z.real - Profile.R(z, table.a[n], table.b[n]))
                smooth.append(mpf(1) / 2 - z.real - Profile.R_smooth(z, n, table, quad, kernel))
            if not raw:
                return {"n": n, "samples": 0, "passed": True}
            return {"n": n, "samples": len(raw), "raw_margin": min(raw),
                    "smooth_margin": min(smooth),
                    "passed": bool(min(raw) >= 0 and min(smooth) >= -QUAD_TOL)}

    @staticmethod
    def rescaled_bound_check(k, table, points, quad=MIN_NODES, kernel=None):
        """Minimum of 1/2 - (a_k/r_k) Re z - rho_k(z) over the points with |z| < r_k."""
        with utils.at_least(table.precision_bits):
            margins = [mpf(1) / 2 - table.a[k] * mpc(z).real / table.r[k]
                       - Profile.rho_k(z, k, table, quad, kernel)
                       for z in points if abs(mpc(z)) < table.r[k]]
        worst = min(margins)
        return {"n": k, "min_margin": worst, "samples": len(margins),
                "passed": bool(worst >= -QUAD_TOL)}

    @staticmethod
    def flatness_ladder(n, table, samples=1000, quad=MIN_NODES, kernel=None):
        """Sup of the certified upper value of rho on |z| = r_{n+1} against r_n^n."""
        with utils.at_least(table.precision_bits):
            radius = table.r[n + 1]
            sup = max(Profile.rho(radius * mp.expjpi(2 * mpf(j) / samples), table, quad, kernel).upper
                      for j in range(samples))
            bound = table.r[n] ** n
            zero = all(Profile.rho_k(table.r[n + 1] * mp.expjpi(2 * mpf(j) / 16) * (1 - mpf(2) ** -20),
                                     k, table, quad, kernel) == 0
                       for k in range(1, n + 1) for j in range(16))
        return {"n": n, "sup": sup, "bound": bound, "samples": samples, "exact_zero": zero,
                "passed": bool(sup <= bound and zero)}
