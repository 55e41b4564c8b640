#!/usr/bin/env python
# -*-coding:utf-8 -*-

import logging
from dataclasses import dataclass, field

import pandas as pd
from mpmath import mp, mpc, mpf

from kobayashipy.Cusp import Cusp
from kobayashipy.exceptions import CertRequired, KobayashiError, NotParallel, ProfileError
from kobayashipy.Profile import MIN_NODES, MollifierKernel, Profile
from kobayashipy.utils import utils

logger = logging.getLogger(__name__)

BLOWUP_COLUMNS = ["n", "delta_n", "a_n", "upper_bound", "bound_times_delta", "baseline_bound", "margin"]


def _inner(u, v):
    return mp.fsum(a * mp.conj(b) for a, b in zip(u, v))


def _norm(u):
    return mp.sqrt(mp.fsum(abs(a) ** 2 for a in u))


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Omega = {Re w + profile < 0} inside B(0, 2), based at the origin.

    ``profile_sign`` = -1 negates the profile; it exists only to exercise the
    failure paths of the certificates.
    """

    dimension: int
    table: object
    summands: tuple = ()
    quad: int = MIN_NODES
    kernel: object = None
    profile_sign: int = 1
    clip_radius: int = 2

    @property
    def normal(self):
        return (mpc(0),) * (self.dimension - 1) + (mpc(1),)

    @property
    def base_point(self):
        return (mpc(0),) * self.dimension

    def profile(self, z):
        """TailInterval of the profile at the first dimension - 1 coordinates."""
        if self.dimension == 2:
            return Profile.rho(z[0], self.table, self.quad, self.kernel)
        return Cusp.rho_tilde(z[:2], self.table, self.summands)

    def defining_value(self, point):
        """Re w + sign * (truncated profile value)."""
        return mpc(point[-1]).real + self.profile_sign * self.profile(point).value

    def defining_upper(self, point):
        """Upper bound of the defining function covering the series tail."""
        interval = self.profile(point)
        if self.profile_sign > 0:
            return mpc(point[-1]).real + interval.upper
        return mpc(point[-1]).real - interval.value

    def depth_identity(self, delta):
        """r(P - delta nu) + delta, exactly 0 when the profile vanishes at the origin."""
        delta = mpf(delta)
        point = tuple(b - delta * v for b, v in zip(self.base_point, self.normal))
        return self.defining_value(point) + delta

    def origin_gradient(self):
        """Central-difference gradient of the profile at 0, step r_{n_max+1}/2."""
        h = self.table.r[self.table.n_max + 1] / 2
        grads = []
        for i in range(self.dimension - 1):
            for unit in (mpc(1), mpc(0, 1)):
                plus = list(self.base_point)
                minus = list(self.base_point)
                plus[i], minus[i] = h * unit, -h * unit
                grads.append((self.profile(plus).value - self.profile(minus).value) / (2 * h))
        return max(abs(g) for g in grads)


@dataclass(frozen=True, eq=False)
class DiscMap:
    """Analytic disc zeta -> point.

    ``c2``: (radius zeta, -depth + gain zeta);
    ``c3``: (radius^3 zeta^3, radius^2 zeta^2, -depth + gain zeta);
    ``linear``: P_depth + zeta depth nu in C^dim.
    """

    family: str
    n: int
    depth: mpf
    radius: mpf
    gain: mpf
    dim: int
    bits: int

    def point(self, zeta):
        with utils.at_least(self.bits):
            zeta = mpc(zeta)
            w = -self.depth + self.gain * zeta
            if self.family == "c2":
                return (self.radius * zeta, w)
            if self.family == "c3":
                return (self.radius ** 3 * zeta ** 3, self.radius ** 2 * zeta ** 2, w)
            return (mpc(0),) * (self.dim - 1) + (w,)

    __call__ = point

    def derivative(self):
        """Closed-form derivative at 0."""
        if self.family == "c2":
            return (mpc(self.radius), mpc(self.gain))
        return (mpc(0),) * (self.dim - 1) + (mpc(self.gain),)

    def to_dict(self):
        return {"family": self.family, "n": self.n, "depth": utils.encode(self.depth),
                "radius": utils.encode(self.radius), "gain": utils.encode(self.gain), "dim": self.dim}


@dataclass(frozen=True)
class DiscCert:
    disc: DiscMap
    sample_count: int
    max_r: mpf
    margin: mpf
    argmax: mpc
    boundary_max: mpf
    max_norm: mpf
    passed: bool

    def to_dict(self):
        return {"disc": self.disc.to_dict(), "sample_count": self.sample_count,
                "max_r": utils.encode(self.max_r), "margin": utils.encode(self.margin),
                "argmax": [utils.encode(self.argmax.real), utils.encode(self.argmax.imag)],
                "boundary_max": utils.encode(self.boundary_max),
                "max_norm": utils.encode(self.max_norm), "passed": self.passed}


@dataclass(frozen=True)
class KobayashiBound:
    point: tuple
    direction: tuple
    alpha: mpf
    cert: DiscCert

    def to_dict(self):
        pair = lambda c: [utils.encode(mpc(c).real), utils.encode(mpc(c).imag)]
        return {"point": [pair(c) for c in self.point], "direction": [pair(c) for c in self.direction],
                "alpha": utils.encode(self.alpha), "cert": self.cert.to_dict()}


class Discs:
    """
    Defining functions of the two domains, the analytic disc families and the
    Kobayashi upper bounds they certify.
    """

    @staticmethod
    def domain_c2(table, quad=MIN_NODES, kernel=None, profile_sign=1):
        kernel = kernel or MollifierKernel.default(quad)
        return DomainSpec(dimension=2, table=table, quad=quad, kernel=kernel, profile_sign=profile_sign)

    @staticmethod
    def domain_c3(table, summands, quad=MIN_NODES, kernel=None, profile_sign=1):
        kernel = kernel or MollifierKernel.default(quad)
        return DomainSpec(dimension=3, table=table, summands=tuple(summands), quad=quad,
                          kernel=kernel, profile_sign=profile_sign)

    @staticmethod
    def disc_c2(n, zeta, table):
        """(r_n zeta, -delta_n + a_n delta_n zeta)."""
        return Discs.c2_family(n, table).point(zeta)

    @staticmethod
    def disc_c3(n, zeta, table):
        """(r_n^3 zeta^3, r_n^2 zeta^2, -delta_n + a_n delta_n zeta), over the cusp."""
        return Discs.c3_family(n, table).point(zeta)

    @staticmethod
    def c2_family(n, table, factor=1):
        with utils.at_least(table.precision_bits):
            return DiscMap(family="c2", n=n, depth=table.delta[n], radius=factor * table.r[n],
                           gain=table.a[n] * table.delta[n], dim=2, bits=table.precision_bits)

    @staticmethod
    def c3_family(n, table, factor=1):
        with utils.at_least(table.precision_bits):
            return DiscMap(family="c3", n=n, depth=table.delta[n], radius=factor * table.r[n],
                           gain=table.a[n] * table.delta[n], dim=3, bits=Cusp.working_bits(table))

    @staticmethod
    def linear_normal_disc(delta, zeta, domain):
        """P_delta + zeta delta nu."""
        return Discs.linear_family(delta, domain).point(zeta)

    @staticmethod
    def linear_family(delta, domain):
        delta = mpf(delta)
        bits = domain.table.precision_bits if domain.dimension == 2 else Cusp.working_bits(domain.table)
        return DiscMap(family="linear", n=0, depth=delta, radius=mpf(0), gain=delta,
                       dim=domain.dimension, bits=bits)

    @staticmethod
    def rogue_disc(n, table, factor=3, family="c2"):
        """Disc of the given family with r_n replaced by factor r_n; leaves the domain."""
        if family == "c3":
            return Discs.c3_family(n, table, factor)
        return Discs.c2_family(n, table, factor)

    @staticmethod
    def fd_derivative(disc, step=1e-6):
        """Central difference of the disc at 0."""
        with utils.at_least(disc.bits):
            h = mpf(step)
            plus, minus = disc.point(h), disc.point(-h)
            return tuple((p - m) / (2 * h) for p, m in zip(plus, minus))

    @staticmethod
    def sample_points(samples):
        """Centre plus concentric rings up to 1 - 1e-6; every ring holds an even
        number of angles so zeta = -|zeta| is sampled."""
        rings = max(2, int(round(samples ** 0.5)))
        per = max(2, samples // rings)
        per += per % 2
        outer = 1 - mpf("1e-6")
        pts = [mpc(0)]
        for i in range(1, rings + 1):
            rad = outer * i / rings
            pts.extend(rad * mp.expjpi(mpf(2 * j) / per) for j in range(per))
        return pts

    @staticmethod
    def certify_disc(disc, domain, samples=10000, boundary=256):
        """Evaluate the tail-inflated defining function along the disc.

        Passes iff every sample is strictly negative, every sample stays in
        B(0, 2) and the truncated defining function is <= 0 on the boundary
        ring |zeta| = 1.

        Returns
        -------
        DiscCert
        """
        with utils.at_least(disc.bits):
            worst, arg, max_norm, count = None, mpc(0), mpf(0), 0
            for zeta in Discs.sample_points(samples):
                point = disc.point(zeta)
                try:
                    value = domain.defining_upper(point)
                except KobayashiError as exc:
                    raise ProfileError("profile failed at zeta={}: {}".format(zeta, exc)) from exc
                max_norm = max(max_norm, _norm(point))
                count += 1
                if worst is None or value > worst:
                    worst, arg = value, zeta
            bmax = max(domain.defining_value(disc.point(mp.expjpi(mpf(2 * j) / boundary)))
                       for j in range(boundary))
            passed = bool(worst < 0 and bmax <= 0 and max_norm < domain.clip_radius)
        logger.info("%s disc n=%d: max r %s over %d samples", disc.family, disc.n,
                    mp.nstr(worst, 6), count)
        return DiscCert(disc=disc, sample_count=count, max_r=worst, margin=-worst, argmax=arg,
                        boundary_max=bmax, max_norm=max_norm, passed=passed)

    @staticmethod
    def kobayashi_upper(disc, cert, Q, X):
        """Certified bound F_K(Q, X) <= alpha from a disc with phi(0) = Q, phi'(0) = X/alpha.

        Parameters
        ----------
        disc : DiscMap
            the witnessing disc
        cert : DiscCert
            its containment certificate, which must have passed
        Q : tuple
            base point
        X : tuple
            tangent vector

        Returns
        -------
        KobayashiBound
        """
        if not cert.passed:
            raise CertRequired("disc {} n={} is not certified inside the domain".format(disc.family, disc.n))
        with utils.at_least(disc.bits):
            Q = tuple(mpc(c) for c in Q)
            X = tuple(mpc(c) for c in X)
            centre = disc.point(0)
            scale = max(_norm(Q), mpf(1))
            if _norm([a - b for a, b in zip(centre, Q)]) > mpf(10) ** -12 * scale:
                raise ValueError("disc does not pass through Q")
            D = disc.derivative()
            lam = _inner(D, X) / _inner(X, X)
            residual = _norm([a - lam * b for a, b in zip(D, X)])
            if residual > mpf(10) ** -12 * _norm(D) or lam.real <= 0 or abs(lam.imag) > mpf(10) ** -12 * abs(lam):
                raise NotParallel("phi'(0) is not a positive multiple of X")
            alpha = _norm(X) / _norm(D)
        return KobayashiBound(point=Q, direction=X, alpha=alpha, cert=cert)

    @staticmethod
    def blowup_table(table, certs):
        """Rows n, delta_n, a_n, 1/(a_n delta_n), 1/a_n, 1/delta_n, margin.

        Parameters
        ----------
        table : ParamTable
            parameter table
        certs : dict
            n -> DiscCert of the c3 disc

        Returns
        -------
        pandas.DataFrame
            mpf-valued columns BLOWUP_COLUMNS
        """
        rows = []
        with utils.at_least(table.precision_bits):
            for n in sorted(certs):
                cert = certs[n]
                disc = cert.disc
                # nu for the c3 family, X_n = (r_n / (a_n delta_n), 1) for c2
                D = disc.derivative()
                X = tuple(c / D[-1] for c in D)
                bound = Discs.kobayashi_upper(disc, cert, disc.point(0), X).alpha
                delta = table.delta[n]
                rows.append({"n": n, "delta_n": delta, "a_n": table.a[n], "upper_bound": bound,
                             "bound_times_delta": bound * delta, "baseline_bound": 1 / delta,
                             "margin": cert.margin})
        return pd.DataFrame(rows, columns=BLOWUP_COLUMNS)

    @staticmethod
    def format_frame(frame, bits):
        """Decimal scientific strings for every mpf column, as written to CSV."""
        out = frame.copy()
        for col in out.columns:
            if col != "n":
                out[col] = [utils.sci(v, bits) for v in out[col]]
        return out

    @staticmethod
    def target_margins(n, table, samples=1000, quad=MIN_NODES, kernel=None, summands=None, sign=1):
        """Margins of rho < delta_n - a_n delta_n Re z / r_n on |z| < r_n.

        Checked on the series in C^2 and, with ``summands``, on the cusp
        series restricted to (zeta^3, zeta^2). Margins are reported raw and
        divided by delta_n.
        """
        kernel = kernel or MollifierKernel.default(quad)
        out = {}
        with utils.at_least(table.precision_bits):
            delta, a, r = table.delta[n], table.a[n], table.r[n]
            pts = [r * z for z in Discs.sample_points(samples)]

            def margin(z, interval):
                upper = interval.upper if sign > 0 else -interval.value
                return delta - a * delta * z.real / r - upper

            c2 = [margin(z, Profile.rho(z, table, quad, kernel)) for z in pts]
            out["c2"] = {"min_margin": min(c2), "min_margin_over_delta": min(c2) / delta,
                         "samples": len(c2), "passed": bool(min(c2) > 0)}
            if summands is not None:
                c3 = [margin(z, Cusp.rho_tilde(Cusp.cusp_point(z, table), table, summands))
                      for z in pts]
                out["c3"] = {"min_margin": min(c3), "min_margin_over_delta": min(c3) / delta,
                             "samples": len(c3), "passed": bool(min(c3) > 0)}
        return out
