#!/usr/bin/env python
# -*-coding:utf-8 -*-

import logging
from dataclasses import dataclass, field

import numpy as np
from mpmath import mp, mpc, mpf
from scipy.stats import norm, qmc

from kobayashipy.exceptions import EmptyRegion, StencilError
from kobayashipy.Profile import QUAD_TOL
from kobayashipy.utils import utils

logger = logging.getLogger(__name__)


def _as_point(z):
    if isinstance(z, (tuple, list)):
        return tuple(mpc(c) for c in z)
    return (mpc(z),)


@dataclass(frozen=True)
class GridSpec:
    """Sample set of a ball in C^d.

    ``layout`` is ``"cartesian"`` (tensor grid over the 2d real axes clipped
    to the ball), ``"polar"`` (d = 1 only: log-spaced radii from ``inner``
    to ``radius`` times uniform angles) or ``"halton"`` (``samples`` scrambled
    Halton points of the ball). ``fixed`` points are always included, and
    ``exclude`` removes points for which it returns True.
    """

    center: tuple
    radius: float
    counts: tuple = (8, 8)
    exclude: object = None
    layout: str = "cartesian"
    inner: float = 0.0
    samples: int = 0
    seed: int = 0
    fixed: tuple = field(default=())

    def __post_init__(self):
        if any(c < 8 for c in self.counts):
            raise ValueError("grid sample counts must be at least 8 per axis, got {}".format(self.counts))
        if self.layout not in ("cartesian", "polar", "halton"):
            raise ValueError("unknown grid layout {!r}".format(self.layout))

    @property
    def dim(self):
        return len(_as_point(self.center))

    def _cartesian(self):
        c = _as_point(self.center)
        axes = [np.linspace(-1.0, 1.0, n) for n in self.counts]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        mesh = mesh[(mesh ** 2).sum(axis=1) <= 1.0]
        d = self.dim
        R = mpf(self.radius)
        return [tuple(c[i] + R * mpc(row[i], row[d + i]) for i in range(d)) for row in mesh]

    def _polar(self):
        c = _as_point(self.center)[0]
        inner = mpf(self.inner) if self.inner > 0 else mpf(self.radius) / 2 ** 20
        n_rad, n_ang = self.counts[0], self.counts[-1]
        pts = []
        for i in range(n_rad):
            rad = inner * (mpf(self.radius) / inner) ** (mpf(i) / (n_rad - 1))
            for j in range(n_ang):
                pts.append((c + rad * mp.expjpi(mpf(2 * j + (i % 2)) / n_ang),))
        return pts

    def _halton(self):
        d = self.dim
        c = _as_point(self.center)
        sampler = qmc.Halton(d=2 * d, scramble=True, seed=self.seed)
        R = mpf(self.radius)
        pts = []
        while len(pts) < self.samples:
            batch = 2 * sampler.random(max(64, 4 * self.samples)) - 1
            for row in batch[(batch ** 2).sum(axis=1) <= 1.0]:
                pts.append(tuple(c[i] + R * mpc(row[i], row[d + i]) for i in range(d)))
                if len(pts) == self.samples:
                    break
        return pts

    def points(self):
        """Sample points as tuples of mpc, exclusions removed.

        Raises
        ------
        EmptyRegion
            the exclusion predicate removed every sample
        """
        if self.layout == "polar":
            pts = self._polar()
        elif self.layout == "halton":
            pts = self._halton()
        else:
            pts = self._cartesian()
        pts = [_as_point(p) for p in self.fixed] + pts
        if self.exclude is not None:
            pts = [p for p in pts if not self.exclude(p)]
        if not pts:
            raise EmptyRegion("no sample survives the exclusion predicate")
        return pts

    def describe(self):
        return {"center": [[str(c.real), str(c.imag)] for c in _as_point(self.center)],
                "radius": str(self.radius), "counts": list(self.counts), "layout": self.layout,
                "inner": str(self.inner), "samples": self.samples, "seed": self.seed,
                "fixed": len(self.fixed), "exclusion": self.exclude is not None}


@dataclass(frozen=True)
class LeviReport:
    """Minimum of a sampled Levi form (or Laplacian) with its witness."""

    min_value: mpf
    argmin_point: tuple
    argmin_direction: tuple
    step: mpf
    samples: int
    seed: int = None
    max_abs: mpf = mpf(0)
    min_relative: mpf = None
    argmin_relative: tuple = None

    def merge(self, other):
        return self if self.min_value <= other.min_value else other

    def to_dict(self):
        pair = lambda c: [utils.encode(mpc(c).real), utils.encode(mpc(c).imag)]
        out = {"min_value": utils.encode(self.min_value),
               "argmin_point": [pair(c) for c in self.argmin_point],
               "argmin_direction": [pair(c) for c in self.argmin_direction],
               "step": utils.encode(self.step), "samples": self.samples, "seed": self.seed,
               "max_abs": utils.encode(self.max_abs)}
        if self.min_relative is not None:
            out["min_relative"] = utils.encode(self.min_relative)
            out["argmin_relative"] = [pair(c) for c in self.argmin_relative]
        return out


@dataclass(frozen=True)
class SubharmonicCert:
    passed: bool
    tol: mpf
    report: LeviReport

    @property
    def margin(self):
        return self.report.min_value + self.tol

    def to_dict(self):
        return {"passed": self.passed, "tol": utils.encode(self.tol),
                "margin": utils.encode(self.margin), "report": self.report.to_dict()}


class Levi:
    """
    Finite-difference Laplacians and Levi forms on sampled regions.
    """

    STEP = mpf("1e-3")

    @staticmethod
    def _eval(f, z):
        try:
            value = mpf(f(z))
        except (ArithmeticError, ValueError) as exc:
            raise StencilError("f failed on the stencil at {}: {}".format(z, exc)) from exc
        if not mp.isfinite(value):
            raise StencilError("f is not finite on the stencil at {}".format(z))
        return value

    @staticmethod
    def laplacian_fd(f, z, h):
        """Five-point Laplacian.

        Parameters
        ----------
        f : callable
            real function of one complex variable
        z : complex or mpc
            centre of the stencil
        h : float or mpf
            step, positive

        Returns
        -------
        mpf
            (f(z+h) + f(z-h) + f(z+ih) + f(z-ih) - 4 f(z)) / h^2
        """
        z, h = mpc(z), mpf(h)
        if h <= 0:
            raise ValueError("step must be positive")
        ih = mpc(0, h)
        total = Levi._eval(f, z + h) + Levi._eval(f, z - h) + Levi._eval(f, z + ih) + Levi._eval(f, z - ih)
        return (total - 4 * Levi._eval(f, z)) / h ** 2

    @staticmethod
    def levi_form_fd(f, z, L, h):
        """Levi form of f at z in direction L, as a quarter of the Laplacian of
        tau -> f(z + tau L) at tau = 0.

        Parameters
        ----------
        f : callable
            real function of a tuple of complex coordinates
        z : tuple
            point of C^d
        L : tuple
            direction, normally of unit length
        h : float or mpf
            step in tau
        """
        z, L = _as_point(z), _as_point(L)
        restricted = lambda tau: f(tuple(zi + tau * li for zi, li in zip(z, L)))
        return Levi.laplacian_fd(restricted, 0, h) / 4

    @staticmethod
    def sphere_directions(d, count, seed=0):
        """``count`` unit vectors of C^d from a scrambled Halton sequence mapped
        through the normal quantile function.

        Returns
        -------
        list of tuple
            directions as tuples of mpc
        """
        sample = qmc.Halton(d=2 * d, scramble=True, seed=seed).random(count)
        gauss = norm.ppf(np.clip(sample, 1e-12, 1 - 1e-12))
        vecs = gauss[:, :d] + 1j * gauss[:, d:]
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        return [tuple(mpc(c) for c in row) for row in vecs]

    @staticmethod
    def _normalize(L):
        L = _as_point(L)
        size = mp.sqrt(mp.fsum(abs(c) ** 2 for c in L))
        return tuple(c / size for c in L)

    @staticmethod
    def min_levi_on_region(f, grid, directions=16, h=None, seed=0, extra_directions=None,
                           scale=None, exact=None, reference=None):
        """Minimum of the finite-difference Levi form over grid points and directions.

        Parameters
        ----------
        f : callable
            real function of a tuple of complex coordinates
        grid : GridSpec
            sample points
        directions : int, optional
            sampled unit directions per point, at least 16
        h : number or callable, optional
            step, or a map point -> step; by default Levi.STEP
        seed : int, optional
            direction sequence seed
        extra_directions : callable, optional
            point -> list of additional directions (normalized here)
        scale : callable, optional
            point -> length scale; values are multiplied by scale^2
        exact : callable, optional
            (point, step) -> None, or a map direction -> Levi form used in
            place of the stencil where f has a known closed form on it
        reference : callable, optional
            (point, direction, value) -> local magnitude; the report then
            also carries the minimum of value / magnitude

        Returns
        -------
        LeviReport
        """
        if directions < 16:
            raise ValueError("at least 16 directions per point are required")
        h = Levi.STEP if h is None else h
        points = grid.points()
        dirs = Levi.sphere_directions(grid.dim, directions, seed)
        best, rel, count, max_abs = None, None, 0, mpf(0)
        for p in points:
            step = h(p) if callable(h) else mpf(h)
            s2 = scale(p) ** 2 if scale is not None else 1
            known = exact(p, step) if exact is not None else None
            local = list(dirs)
            if extra_directions is not None:
                local += [Levi._normalize(L) for L in extra_directions(p)]
            for L in local:
                value = known(L) if known is not None else Levi.levi_form_fd(f, p, L, step)
                value = value * s2
                count += 1
                max_abs = max(max_abs, abs(value))
                if best is None or value < best[0]:
                    best = (value, p, L, step)
                if reference is not None:
                    size = reference(p, L, value)
                    ratio = value / size if size > 0 else mpf(0)
                    if rel is None or ratio < rel[0]:
                        rel = (ratio, p)
        logger.debug("levi minimum %s over %d pairs", mp.nstr(best[0], 8), count)
        return LeviReport(min_value=best[0], argmin_point=best[1], argmin_direction=best[2],
                          step=mpf(best[3]), samples=count, seed=seed, max_abs=max_abs,
                          min_relative=rel[0] if rel else None,
                          argmin_relative=rel[1] if rel else None)

    @staticmethod
    def certify_subharmonic(f, grid, h=None, tol=None, scale=None):
        """Pass iff the sampled (scale-normalized) Laplacian stays above -tol.

        ``h`` may be a number or a map z -> step. With ``scale`` given, the
        Laplacian at z is multiplied by scale(z)^2 and the default tolerance
        is max(1e-4, 10 QUAD_TOL / (h/scale)^2).
        """
        h = Levi.STEP if h is None else h
        best, count, max_abs, worst_rel = None, 0, mpf(0), mpf(0)
        for p in grid.points():
            z = p[0]
            step = mpf(h(z)) if callable(h) else mpf(h)
            s = mpf(scale(z)) if scale is not None else mpf(1)
            value = Levi.laplacian_fd(f, z, step) * s ** 2
            worst_rel = max(worst_rel, s / step)
            count += 1
            max_abs = max(max_abs, abs(value))
            if best is None or value < best[0]:
                best = (value, p, step)
        if tol is None:
            tol = max(mpf("1e-4"), 10 * QUAD_TOL * worst_rel ** 2)
        report = LeviReport(min_value=best[0], argmin_point=best[1], argmin_direction=(mpc(1),),
                            step=best[2], samples=count, max_abs=max_abs)
        return SubharmonicCert(passed=bool(best[0] >= -tol), tol=mpf(tol), report=report)

    @staticmethod
    def sub_mean_value(f, points, radius, count=64, tol=1e-12):
        """Circle averages of f minus the centre values; the weak subharmonicity check
        used for the unsmoothed R_n."""
        radius = mpf(radius)
        margins = []
        for z in points:
            z = mpc(z)
            circle = mp.fsum(f(z + radius * mp.expjpi(2 * mpf(j) / count)) for j in range(count)) / count
            margins.append(circle - f(z))
        worst = min(margins)
        return {"min_margin": worst, "tol": mpf(tol), "samples": len(margins), "circle_points": count,
                "passed": bool(worst >= -tol)}

    @staticmethod
    def closed_form_levi_q(z, L):
        """Levi form of e^{|z|^2} |s^2 - t^3|^2 at z = (s, t) in direction L.

        e^{|z|^2} (|L|^2 |g|^2 + |<L, conj z> g + dg(L)|^2) with g = s^2 - t^3.
        """
        (s, t), (ls, lt) = _as_point(z), _as_point(L)
        g = s ** 2 - t ** 3
        A = mp.conj(s) * ls + mp.conj(t) * lt
        B = 2 * s * ls - 3 * t ** 2 * lt
        norm_z = abs(s) ** 2 + abs(t) ** 2
        norm_L = abs(ls) ** 2 + abs(lt) ** 2
        return mp.exp(norm_z) * (norm_L * abs(g) ** 2 + abs(A * g + B) ** 2)
