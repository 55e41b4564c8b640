#!/usr/bin/env python
# -*-coding:utf-8 -*-

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from mpmath import mp, mpc, mpf
from scipy.optimize import minimize_scalar

from kobayashipy.exceptions import InsideCore, NonPositiveCorrector, NotOnVariety, OutsideTube
from kobayashipy.Levi import GridSpec, Levi
from kobayashipy.Profile import MIN_NODES, MollifierKernel, Profile, TailInterval
from kobayashipy.utils import utils

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CuspGeometry:
    """Balls and tube around the cusp V = {s^2 = t^3} used by the n-th summand.

    B_n is the ball of radius r_tilde, B_n' the ball of radius 3 r_tilde / 4,
    and U_n the tube |t - s^{2/3}| < d over the sheets V_1 (s = -t^{3/2})
    and V_2 (s = +t^{3/2}). ``working_bits`` is the mpmath precision that
    resolves offsets of size d at unit scale.
    """

    n: int
    r_tilde: mpf
    d: mpf
    working_bits: int

    def to_dict(self):
        return {"n": self.n, "r_tilde": utils.encode(self.r_tilde), "d": utils.encode(self.d),
                "working_bits": self.working_bits}


@dataclass(frozen=True)
class SheetChoice:
    zeta: mpc
    t: mpc
    dist: mpf
    sheet: str
    tie: bool


@dataclass(frozen=True, eq=False)
class PshSummand:
    """p_n + K_n q, plurisubharmonic with -C_n + K_n c_n >= 0."""

    n: int
    K: mpf
    C: mpf
    c: mpf
    geo: CuspGeometry
    table: object
    quad: int = MIN_NODES
    reports: dict = field(default_factory=dict)

    def __call__(self, z):
        return Cusp.psh_summand(z, self.n, self.table, self.geo, self.K, self.quad)

    @property
    def levi_margin(self):
        return -self.C + self.K * self.c

    def to_dict(self):
        out = {"n": self.n, "K": utils.encode(self.K), "C": utils.encode(self.C),
               "c": utils.encode(self.c), "levi_margin": utils.encode(self.levi_margin)}
        out.update(self.geo.to_dict())
        out.update(self.reports)
        return out


def _smoothstep(y):
    if y <= 0:
        return mpf(0)
    if y >= 1:
        return mpf(1)
    return y ** 3 * (10 - 15 * y + 6 * y ** 2)


def _norm2(z):
    return abs(z[0]) ** 2 + abs(z[1]) ** 2


class Cusp:
    """
    Extension of rho_n from the cusp V = {s^2 = t^3} to C^2: projection onto
    V, cutoff, corrector q and the plurisubharmonic summands.
    """

    SAFETY = 2
    REFINE_SCANS = (64, 24, 17, 12)

    @staticmethod
    def h_profile(x):
        """0 on [0, 9/16], 1 on [1, inf), quintic smoothstep in between."""
        return _smoothstep((mpf(x) - mpf(9) / 16) / (mpf(7) / 16))

    @staticmethod
    def chi_profile(x):
        """1 on [0, 1/2], 0 on [1, inf), quintic smoothstep in between."""
        return 1 - _smoothstep(2 * mpf(x) - 1)

    @staticmethod
    def working_bits(table, n=None):
        """Precision for the summand of index n (n_max by default).

        A second difference of q with step 1e-3 d_n along the sheet is of
        relative size d_n^2 against an input rounding of relative size
        2^-bits / d_n, hence three times the bits of d_n on top of the table
        precision.
        """
        with utils.at_least(table.precision_bits):
            d = table.d[table.n_max if n is None else n]
            return table.precision_bits + 3 * int(mp.ceil(-mp.log(d, 2)))

    @staticmethod
    def geometry(n, table):
        return CuspGeometry(n=n, r_tilde=table.r_tilde[n], d=table.d[n],
                            working_bits=Cusp.working_bits(table, n))

    @staticmethod
    def cusp_point(zeta, table):
        """(zeta^3, zeta^2) at the cusp working precision of the table."""
        with utils.at_least(Cusp.working_bits(table)):
            zeta = mpc(zeta)
            return (zeta ** 3, zeta ** 2)

    @staticmethod
    def zeta_of_cusp_point(p):
        """Parameter zeta = s/t of a point (s, t) of V, 0 at the origin."""
        s, t = mpc(p[0]), mpc(p[1])
        if abs(s ** 2 - t ** 3) > mpf(10) ** -12 * max(abs(s) ** 2, abs(t) ** 3, 1):
            raise NotOnVariety("({}, {}) is not on s^2 = t^3".format(s, t))
        if t == 0:
            return mpc(0)
        return s / t

    @staticmethod
    def nearest_sheet(z):
        """Branch of s^{2/3} nearest to t.

        The three cube roots zeta_k of s give the points (s, zeta_k^2) of V
        over s; the nearest one is chosen. Its sheet is V_2 when zeta_k is the
        principal square root of zeta_k^2 and V_1 otherwise. Ties prefer V_2,
        then the lowest root index.
        """
        s, t = mpc(z[0]), mpc(z[1])
        if s == 0:
            return SheetChoice(zeta=mpc(0), t=mpc(0), dist=abs(t), sheet="V2", tie=False)
        omega = mp.expjpi(mpf(2) / 3)
        zeta = mp.root(s, 3)
        cands = []
        for k in range(3):
            tk = zeta ** 2
            cands.append([abs(t - tk), k, zeta, tk])
            zeta = zeta * omega
        cands.sort(key=lambda c: c[0])
        slack = mpf(2) ** (-(mp.prec - 8)) * max(cands[0][0], abs(cands[0][3]))
        tied = [c for c in cands if c[0] - cands[0][0] <= slack]
        for c in tied:
            root = mp.sqrt(c[3])
            c.append("V2" if abs(c[2] - root) <= abs(c[2] + root) else "V1")
        best = min(tied, key=lambda c: (c[4] != "V2", c[1]))
        return SheetChoice(zeta=best[2], t=best[3], dist=best[0], sheet=best[4], tie=len(tied) > 1)

    @staticmethod
    def project_to_cusp(z, geo):
        """Nearest-sheet projection pi(z) = (s, s^{2/3}) on U_n outside B_n'.

        Parameters
        ----------
        z : tuple
            point (s, t)
        geo : CuspGeometry
            balls and tube of the summand

        Returns
        -------
        tuple
            the point of V over s on the nearest sheet; z itself when z is on V
            to working precision
        """
        with utils.at_least(geo.working_bits):
            z = (mpc(z[0]), mpc(z[1]))
            if mp.sqrt(_norm2(z)) < 3 * geo.r_tilde / 4:
                raise InsideCore("|z| is below 3 r_tilde / 4 for n={}".format(geo.n))
            choice = Cusp.nearest_sheet(z)
            if choice.dist > geo.d:
                raise OutsideTube("no sheet within d_n of z for n={}".format(geo.n))
            if choice.tie:
                warnings.warn("equidistant cusp sheets at z; choosing {}".format(choice.sheet))
            if choice.dist <= mpf(2) ** (-(mp.prec - 8)) * abs(z[1]):
                return z
            return (z[0], choice.t)

    @staticmethod
    def cutoff_chi_n(z, geo, choice=None):
        """Cutoff chi_n: 1 on B_n', chi(h(|z|^2/r_tilde^2) |z - pi(z)|^2 / d^2) on
        B_n minus B_n', chi(|z - pi(z)|^2 / d^2) outside B_n (0 beyond the tube).

        ``choice`` is the nearest sheet of z when the caller already has it.
        """
        with utils.at_least(geo.working_bits):
            z = (mpc(z[0]), mpc(z[1]))
            n2 = _norm2(z)
            rt2 = geo.r_tilde ** 2
            if n2 <= mpf(9) / 16 * rt2:
                return mpf(1)
            choice = choice or Cusp.nearest_sheet(z)
            x = choice.dist ** 2 / geo.d ** 2
            if n2 < rt2:
                x = Cusp.h_profile(n2 / rt2) * x
            return Cusp.chi_profile(x)

    @staticmethod
    def q_corrector(z):
        """q(z) = e^{|z|^2} |s^2 - t^3|^2, exactly 0 when s^2 - t^3 is rounding noise."""
        s, t = mpc(z[0]), mpc(z[1])
        g = s ** 2 - t ** 3
        if abs(g) <= mpf(2) ** (-(mp.prec - 8)) * max(abs(s) ** 2, abs(t) ** 3):
            return mpf(0)
        return mp.exp(_norm2((s, t))) * abs(g) ** 2

    @staticmethod
    def p_n(z, n, table, geo, quad=MIN_NODES, kernel=None):
        """rho_n(zeta(pi(z))) chi_n(z) extended by 0 off the tube and on B_n.

        Everything runs at the working precision: second differences with
        steps of order d_n are taken of the product.
        """
        with utils.at_least(geo.working_bits):
            z = (mpc(z[0]), mpc(z[1]))
            if _norm2(z) < geo.r_tilde ** 2:
                return mpf(0)
            if abs(z[0]) < (table.r[n] ** 2 / table.a[n]) ** 3:
                return mpf(0)
            choice = Cusp.nearest_sheet(z)
            if choice.dist >= geo.d:
                return mpf(0)
            if choice.tie:
                warnings.warn("equidistant cusp sheets at z; choosing {}".format(choice.sheet))
            cut = Cusp.cutoff_chi_n(z, geo, choice)
            if cut == 0:
                return mpf(0)
            value = Profile.rho_k(choice.zeta, n, table, quad, kernel)
            return value * cut

    @staticmethod
    def p_vanishes_near(z, n, table, geo, radius):
        """True when p_n is 0 on the closed ball of the given radius around z.

        s^{2/3} moves by at most 4 radius / (3 |zeta|) while |s| stays above
        half its value, so the tube distance drops by at most
        radius (1 + 4 / (3 |zeta|)).
        """
        with utils.at_least(geo.working_bits):
            z = (mpc(z[0]), mpc(z[1]))
            radius = mpf(radius)
            if mp.sqrt(_norm2(z)) + radius < geo.r_tilde:
                return True
            s = abs(z[0])
            if s + radius < (table.r[n] ** 2 / table.a[n]) ** 3:
                return True
            if 2 * radius >= s:
                return False
            choice = Cusp.nearest_sheet(z)
            return bool(choice.dist - radius * (1 + 4 / (3 * abs(choice.zeta))) > geo.d)

    @staticmethod
    def k_gain(C_n, c_n):
        """K_n = SAFETY C_n / c_n, so that -C_n + K_n c_n = C_n >= 0."""
        C_n, c_n = mpf(C_n), mpf(c_n)
        if c_n <= 0 or C_n < 0:
            raise ValueError("k_gain needs c_n > 0 and C_n >= 0")
        return Cusp.SAFETY * C_n / c_n

    @staticmethod
    def psh_summand(z, n, table, geo, K, quad=MIN_NODES, kernel=None):
        """p_n(z) + K_n q(z)."""
        with utils.at_least(geo.working_bits):
            p = Cusp.p_n(z, n, table, geo, quad, kernel)
            q = Cusp.q_corrector(z)
            return p if q == 0 else p + K * q

    @staticmethod
    def sheet_disjointness(geo, samples=500):
        """Smallest distance from sampled points of V outside B_n' to the other
        sheets, in units of d_n; disjoint tubes need more than 2."""
        with utils.at_least(geo.working_bits):
            inner = mp.sqrt(3 * geo.r_tilde / 4)
            outer = mpf("1.1")
            worst = None
            for zeta in Profile.annulus_points(inner, outer, samples):
                s, t = zeta ** 3, zeta ** 2
                others = [abs(t - mp.root(s, 3, k) ** 2) for k in range(3)]
                others.sort()
                same_t = 2 * abs(t) ** mpf(1.5)
                gap = min(others[1], same_t) / geo.d
                worst = gap if worst is None else min(worst, gap)
            return {"n": geo.n, "min_gap_over_d": worst, "samples": samples,
                    "passed": bool(worst > 2)}

    @staticmethod
    def shell_radii(geo, table):
        """Range of |zeta| sampled on A_n: max(r_{n+1}/2, 1.1 sqrt(r_tilde)) to 1.1."""
        with utils.at_least(geo.working_bits):
            return max(table.r[geo.n + 1] / 2, mpf("1.1") * mp.sqrt(geo.r_tilde)), mpf("1.1")

    @staticmethod
    def shell_point(geo, zeta, x, psi):
        """(zeta^3, zeta^2 + d sqrt(x) e^{i psi}), at squared offset x d^2 from V."""
        with utils.at_least(geo.working_bits):
            zeta = mpc(zeta)
            return (zeta ** 3, zeta ** 2 + geo.d * mp.sqrt(mpf(x)) * mp.expj(mpf(psi)))

    @staticmethod
    def shell_grid(geo, table, radial=5, angular=4, offsets=3, phases=1):
        """Deterministic samples of A_n = {d^2/2 <= |z - pi(z)|^2 <= d^2} in B(0, 2).

        Points are (zeta^3, zeta^2 + d sqrt(x) e^{i psi}) with |zeta| log-spaced
        over Cusp.shell_radii (endpoints included), arg zeta = 2 pi k / angular,
        x in linspace(1/2, 1, offsets) and psi = 2 pi j / phases. Doubling
        (radial, angular, offsets, phases) to (2 radial - 1, 2 angular,
        2 offsets - 1, 2 phases) keeps every point.
        """
        with utils.at_least(geo.working_bits):
            lo, hi = Cusp.shell_radii(geo, table)
            pts = []
            for i in range(radial):
                rad = lo * (hi / lo) ** (mpf(i) / (radial - 1))
                for k in range(angular):
                    zeta = rad * mp.expjpi(mpf(2 * k) / angular)
                    s, t = zeta ** 3, zeta ** 2
                    for j in range(offsets):
                        x = mpf(1) / 2 + mpf(j) / (2 * (offsets - 1))
                        for m in range(phases):
                            pts.append((s, t + geo.d * mp.sqrt(x) * mp.expjpi(mpf(2 * m) / phases)))
            quarter = geo.d / 4

            def near_variety(p):
                with utils.at_least(geo.working_bits):
                    return Cusp.nearest_sheet(p).dist < quarter

        return GridSpec(center=(0, 0), radius=2, layout="halton", samples=0,
                        fixed=tuple(pts), exclude=near_variety)

    @staticmethod
    def special_directions(p):
        """Tangent (3t^2, 2s) and normal conj(-(2/3)/zeta, 1) of the nearest sheet at p."""
        choice = Cusp.nearest_sheet(p)
        s, t = mpc(p[0]), mpc(p[1])
        dirs = [(3 * choice.t ** 2, 2 * s)]
        if choice.zeta != 0:
            dirs.append((mp.conj(-mpf(2) / 3 / choice.zeta), mpc(1)))
        return [L for L in dirs if abs(L[0]) + abs(L[1]) > 0]

    @staticmethod
    def refine_levi_minimum(f, geo, table, report, h, scans=None, sweeps=2):
        """Lower a negative grid minimum of the Levi form of f by searching A_n.

        The shell point (zeta, x, psi) of Cusp.shell_point moves one
        coordinate at a time through log|zeta| over Cusp.shell_radii,
        arg zeta, x in [1/2, 1] and psi. Each coordinate is scanned over its
        whole range, then bounded Brent minimization runs between the
        neighbours of the best scan value. Values are taken in the grid
        argmin direction and in the sheet normal, so the grid only enters
        through the start point.

        Parameters
        ----------
        f : callable
            real function of (s, t)
        geo : CuspGeometry
            geometry of the summand
        table : ParamTable
            parameter table
        report : LeviReport
            grid minimum
        h : number or callable
            finite-difference step, or a map point -> step
        scans : tuple of int, optional
            scan sizes of the four coordinates, by default Cusp.REFINE_SCANS
        sweeps : int, optional
            passes over the four coordinates

        Returns
        -------
        LeviReport
            the report of the lowest value seen, on the grid or off it
        """
        if report.min_value >= 0:
            return report
        scans = scans or Cusp.REFINE_SCANS
        with utils.at_least(geo.working_bits):
            scale = -report.min_value
            lo, hi = Cusp.shell_radii(geo, table)
            choice = Cusp.nearest_sheet(report.argmin_point)
            offset = mpc(report.argmin_point[1]) - choice.t
            x0 = min(max(abs(offset) ** 2 / geo.d ** 2, mpf(1) / 2), mpf(1))
            coords = [float(mp.log(abs(choice.zeta))), float(mp.arg(choice.zeta)), float(x0),
                      float(mp.arg(offset)) if offset != 0 else 0.0]
            bounds = [(float(mp.log(lo)), float(mp.log(hi))), (-np.pi, np.pi), (0.5, 1.0),
                      (-np.pi, np.pi)]
            best = [report.min_value, report.argmin_point, report.argmin_direction]
            calls = [0]

            def objective(c):
                zeta = mp.exp(mpf(c[0])) * mp.expj(mpf(c[1]))
                p = Cusp.shell_point(geo, zeta, c[2], c[3])
                step = h(p) if callable(h) else mpf(h)
                low = None
                for L in (report.argmin_direction, Levi._normalize(Cusp.special_directions(p)[-1])):
                    value = Levi.levi_form_fd(f, p, L, step)
                    calls[0] += 1
                    if value < best[0]:
                        best[:] = [value, p, L]
                    low = value if low is None else min(low, value)
                return float(max(min(low / scale, mpf("1e300")), mpf("-1e300")))

            for _ in range(sweeps):
                for i, count in enumerate(scans):
                    a, b = bounds[i]

                    def along(g, i=i):
                        trial = list(coords)
                        trial[i] = float(g)
                        return objective(trial)

                    knots = np.linspace(a, b, count)
                    vals = [along(g) for g in knots]
                    k = int(np.argmin(vals))
                    res = minimize_scalar(along, bounds=(knots[max(k - 1, 0)], knots[min(k + 1, count - 1)]),
                                          method="bounded", options={"xatol": 1e-6 * (b - a)})
                    coords[i] = float(res.x) if res.fun < vals[k] else float(knots[k])
        logger.debug("n=%d Levi minimum %s refined to %s in %d evaluations", geo.n,
                     mp.nstr(report.min_value, 6), mp.nstr(best[0], 6), calls[0])
        return replace(report, min_value=best[0], argmin_point=best[1], argmin_direction=best[2],
                       samples=report.samples + calls[0])

    @staticmethod
    def estimate_levi_constants(n, table, geo, grid=None, h=None, directions=16, seed=0,
                                quad=MIN_NODES, kernel=None, full_output=False, refine=True):
        """Levi constants C_n and c_n of p_n and q over A_n.

        C_n = SAFETY max(0, -min Levi p_n) and c_n = min Levi q / SAFETY over
        the grid, with sampled directions plus the sheet tangent and normal.
        A negative grid minimum of Levi p_n is then refined over the whole
        shell by Cusp.refine_levi_minimum.

        Parameters
        ----------
        n : int
            summand index
        table : ParamTable
            parameter table
        geo : CuspGeometry
            geometry of the summand
        grid : GridSpec, optional
            samples of A_n, by default Cusp.shell_grid(geo, table)
        h : number or callable, optional
            finite-difference step, by default 1e-3 d_n
        directions : int, optional
            sampled directions per point
        seed : int, optional
            direction seed
        full_output : bool, optional
            also return the two LeviReports
        refine : bool, optional
            refine the minimum of Levi p_n off the grid, by default True

        Returns
        -------
        (mpf, mpf) or (mpf, mpf, dict)
        """
        kernel = kernel or MollifierKernel.default(quad)
        with utils.at_least(geo.working_bits):
            grid = grid or Cusp.shell_grid(geo, table)
            h = h if h is not None else Levi.STEP * geo.d
            p = lambda z: Cusp.p_n(z, n, table, geo, quad, kernel)
            p_rep = Levi.min_levi_on_region(p, grid, directions, h, seed,
                                            extra_directions=Cusp.special_directions)
            if refine:
                p_rep = Cusp.refine_levi_minimum(p, geo, table, p_rep, h)
            q_rep = Levi.min_levi_on_region(Cusp.q_corrector, grid, directions, h, seed,
                                            extra_directions=Cusp.special_directions)
            if q_rep.min_value <= 0:
                raise NonPositiveCorrector("Levi form of q is not positive on A_{} (min {})"
                                           .format(n, mp.nstr(q_rep.min_value, 6)))
            C = Cusp.SAFETY * max(mpf(0), -p_rep.min_value)
            c = q_rep.min_value / Cusp.SAFETY
        logger.info("n=%d C=%s c=%s over %d pairs", n, mp.nstr(C, 6), mp.nstr(c, 6), p_rep.samples)
        if full_output:
            return C, c, {"p": p_rep, "q": q_rep}
        return C, c

    @staticmethod
    def levi_stability(n, table, geo, shell=(5, 4, 3, 1), directions=16, seed=0,
                       quad=MIN_NODES, kernel=None, base=None):
        """Relative change of C_n and c_n when the shell grid resolution is doubled.

        ``base`` is the (C_n, c_n) pair already estimated on ``shell``.
        """
        radial, angular, offsets, phases = shell
        if base is None:
            base = Cusp.estimate_levi_constants(n, table, geo, Cusp.shell_grid(geo, table, *shell),
                                                directions=directions, seed=seed, quad=quad,
                                                kernel=kernel)
        fine_shell = (2 * radial - 1, 2 * angular, 2 * offsets - 1, 2 * phases)
        fine = Cusp.estimate_levi_constants(n, table, geo, Cusp.shell_grid(geo, table, *fine_shell),
                                            directions=directions, seed=seed, quad=quad, kernel=kernel)
        with utils.at_least(geo.working_bits):
            rel = lambda a, b: mpf(0) if a == b else abs(a - b) / max(abs(a), abs(b))
            dC, dc = rel(base[0], fine[0]), rel(base[1], fine[1])
        if dC >= mpf("0.25") or dc >= mpf("0.25"):
            logger.warning("n=%d Levi constants move under grid doubling: C %s, c %s", n,
                           mp.nstr(dC, 3), mp.nstr(dc, 3))
        return {"n": n, "C": base[0], "C_fine": fine[0], "c": base[1], "c_fine": fine[1],
                "fine_shell": list(fine_shell), "rel_change_C": dC, "rel_change_c": dc,
                "passed": bool(dC < mpf("0.25") and dc < mpf("0.25"))}

    @staticmethod
    def build_summands(table, shell=(5, 4, 3, 1), directions=16, seed=0, quad=MIN_NODES,
                       kernel=None):
        """Estimate C_n, c_n, K_n for every n and build the summands.

        Returns
        -------
        (ParamTable, list of PshSummand)
            the table with C, c, K filled and the summands for n = 1..n_max
        """
        kernel = kernel or MollifierKernel.default(quad)
        Cs, cs, Ks, summands = {}, {}, {}, []
        for n in table.indices():
            geo = Cusp.geometry(n, table)
            grid = Cusp.shell_grid(geo, table, *shell)
            C, c, reports = Cusp.estimate_levi_constants(n, table, geo, grid, directions=directions,
                                                         seed=seed, quad=quad, kernel=kernel,
                                                         full_output=True)
            K = Cusp.k_gain(C, c)
            Cs[n], cs[n], Ks[n] = C, c, K
            summands.append((n, geo, C, c, K, reports, grid))
        filled = table.with_levi_constants(Cs, cs, Ks)
        out = []
        for n, geo, C, c, K, reports, grid in summands:
            meta = {"grid": grid.describe(), "shell": list(shell), "directions": directions,
                    "levi_p": reports["p"].to_dict(), "levi_q": reports["q"].to_dict()}
            out.append(PshSummand(n=n, K=K, C=C, c=c, geo=geo, table=filled, quad=quad, reports=meta))
        return filled, out

    @staticmethod
    def psh_check(summand, samples=1000, directions=16, seed=0, shell=(5, 4, 3, 1), kernel=None,
                  rtol=mpf("1e-4")):
        """Sampled Levi form of a summand over B(0, 2) and the shell A_n.

        Each (point, direction) value is compared with its own magnitude
        |Levi p_n| + K_n Levi q, and the check passes when every ratio is at
        least -rtol and -C_n + K_n c_n >= 0. Where p_n vanishes on the whole
        stencil the closed form K_n Levi q is used instead of differences.
        """
        geo, table, n, K = summand.geo, summand.table, summand.n, summand.K
        kernel = kernel or MollifierKernel.default(summand.quad)
        shell_pts = Cusp.shell_grid(geo, table, *shell).fixed
        with utils.at_least(geo.working_bits):
            grid = GridSpec(center=(0, 0), radius=2, layout="halton", samples=samples, seed=seed,
                            fixed=shell_pts)

            def step(p):
                dist = Cusp.nearest_sheet(p).dist
                return Levi.STEP * max(geo.d, min(dist, mpf(1)))

            def exact(p, h):
                if Cusp.p_vanishes_near(p, n, table, geo, h):
                    return lambda L: K * Levi.closed_form_levi_q(p, L)
                return None

            def magnitude(p, L, value):
                kq = K * Levi.closed_form_levi_q(p, L)
                return abs(value - kq) + kq

            f = lambda z: Cusp.psh_summand(z, n, table, geo, K, summand.quad, kernel)
            rep = Levi.min_levi_on_region(f, grid, directions, step, seed,
                                          extra_directions=Cusp.special_directions,
                                          exact=exact, reference=magnitude)
            rtol = mpf(rtol)
            passed = rep.min_relative >= -rtol and summand.levi_margin >= 0
        if not passed:
            logger.warning("n=%d summand fails the Levi check: min ratio %s, margin %s", n,
                           mp.nstr(rep.min_relative, 6), mp.nstr(summand.levi_margin, 6))
        return {"n": n, "rtol": rtol, "min_relative": rep.min_relative,
                "levi_margin": summand.levi_margin, "report": rep, "passed": bool(passed)}

    @staticmethod
    def rho_tilde(z, table, summands, n_terms=None):
        """Truncated series sum_j delta_j (p_j + K_j q) with its tail bound.

        The tail bound delta_N/2 holds on V, where q vanishes; off V it is +inf.
        """
        N = table.n_max if n_terms is None else n_terms
        with utils.at_least(Cusp.working_bits(table)):
            z = (mpc(z[0]), mpc(z[1]))
            value = mp.fsum(table.delta[sm.n] * sm(z) for sm in summands if sm.n <= N)
            if Cusp.q_corrector(z) == 0:
                tail = table.delta[N] / 2 * max(mpf(1), 2 * mp.sqrt(abs(z[1])))
            else:
                tail = mpf("inf")
            return TailInterval(value, tail)
