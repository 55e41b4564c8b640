#!/usr/bin/env python
# -*-coding:utf-8 -*-

import argparse
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from mpmath import mp, mpc, mpf  # noqa: E402

from kobayashipy import __version__  # noqa: E402
from kobayashipy.Cusp import Cusp  # noqa: E402
from kobayashipy.Discs import Discs  # noqa: E402
from kobayashipy.exceptions import CertificationError, ConstructionError, KobayashiError, QuadratureError  # noqa: E402
from kobayashipy.Levi import GridSpec, Levi  # noqa: E402
from kobayashipy.Params import Params  # noqa: E402
from kobayashipy.Profile import MollifierKernel, Profile  # noqa: E402
from kobayashipy.utils import utils  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_CERT, EXIT_BUILD, EXIT_IO = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    """Run settings, echoed verbatim into report.json."""

    n_max: int = 4
    precision_bits: int = 512
    quad: int = 64
    grid: int = 64
    levi_points: int = 1000
    dirs: int = 16
    seed: int = 20240101
    out: str = "out"
    a_rule: str = "exp:10"
    perturb: str = None
    disc_samples: int = 10000
    check_samples: int = 1000
    which: str = "all"
    jobs: int = 1
    shell: tuple = (5, 4, 3, 1)
    n_list: tuple = ()

    def validate(self):
        counts = {"n_max": self.n_max, "precision_bits": self.precision_bits, "quad": self.quad,
                  "grid": self.grid, "levi_points": self.levi_points, "dirs": self.dirs,
                  "disc_samples": self.disc_samples, "check_samples": self.check_samples,
                  "jobs": self.jobs}
        for name, value in counts.items():
            if value <= 0:
                raise ValueError("{} must be positive, got {}".format(name, value))
        if self.which not in ("c2", "c3", "all"):
            raise ValueError("which must be c2, c3 or all")
        if self.perturb not in (None, "rho-sign"):
            raise ValueError("unknown perturbation {!r}".format(self.perturb))
        if any(n < 1 or n > self.n_max for n in self.n_list):
            raise ValueError("n_list entries must lie in 1..n_max")
        if len(self.shell) != 4 or min(self.shell) < 1 or self.shell[0] < 2 or self.shell[2] < 2:
            raise ValueError("shell must be radial,angular,offsets,phases with radial, offsets >= 2")
        Params.growth_rule(self.a_rule)
        return self

    @classmethod
    def from_args(cls, args):
        n_list = tuple(int(x) for x in args.n_list.split(",")) if getattr(args, "n_list", None) else ()
        shell = tuple(int(x) for x in args.shell.split(","))
        return cls(n_max=args.n_max, precision_bits=args.bits, quad=args.quad, grid=args.grid,
                   levi_points=args.levi_points, dirs=args.dirs, seed=args.seed, out=args.out,
                   a_rule=args.a_rule, perturb=args.perturb, disc_samples=args.disc_samples,
                   check_samples=args.check_samples, which=getattr(args, "which", "all"),
                   jobs=args.jobs, shell=shell, n_list=n_list).validate()

    @property
    def sign(self):
        return -1 if self.perturb == "rho-sign" else 1

    def path(self, name):
        return os.path.join(self.out, name)

    def to_dict(self):
        out = asdict(self)
        out["shell"] = list(self.shell)
        out["n_list"] = list(self.n_list)
        return out


@dataclass
class RunReport:
    """Sections of a verification run; passes iff every nested check passes."""

    config: dict
    params: dict
    sections: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(ok for _, ok in Lab.collect_flags(Lab.jsonable(self.sections)))

    def failures(self):
        return [path for path, ok in Lab.collect_flags(Lab.jsonable(self.sections)) if not ok]

    def to_dict(self):
        return {"version": __version__, "config": self.config, "params": self.params,
                **{k: Lab.jsonable(v) for k, v in self.sections.items()},
                "rollup": {"passed": self.passed, "failures": self.failures()}}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"


def _c2_suite(config, table, n):
    """Every one-variable check of index n."""
    kernel = MollifierKernel.default(config.quad)
    quad = config.quad
    with utils.at_least(table.precision_bits):
        out = {}
        r, b = table.r[n], table.b[n]
        plane = Profile.annulus_points(r / 2, 4, config.check_samples)
        out["sandwich"] = Profile.sandwich(n, table, plane, quad, kernel)
        out["upper_bounds"] = Profile.R_upper_bound_check(n, table, plane, quad, kernel)

        f = lambda z: Profile.R_smooth(z, n, table, quad, kernel)
        grid = GridSpec(center=(0,), radius=4, counts=(config.grid, config.grid), layout="polar", inner=r / 2)
        step = lambda z: Levi.STEP * abs(z)
        half = lambda z: Levi.STEP / 2 * abs(z)
        cert = Levi.certify_subharmonic(f, grid, h=step, scale=abs)
        cert_half = Levi.certify_subharmonic(f, grid, h=half, scale=abs)
        out["subharmonic"] = {"h": cert.to_dict(), "h_half": cert_half.to_dict(), "grid": grid.describe(),
                              "passed": cert.passed and cert_half.passed}
        raw = lambda z: Profile.R(z, table.a[n], b)
        kink = Profile.annulus_points(max(2 * r, b / 4), 4, min(config.check_samples, 256))
        out["sub_mean_value"] = Levi.sub_mean_value(raw, kink, b / 8, 64, tol=1e-12)

        disc_pts = [r * z for z in Discs.sample_points(config.check_samples)]
        out["rescaled"] = Profile.rescaled_bound_check(n, table, disc_pts, quad, kernel)
        if n < table.n_max:
            out["flatness"] = Profile.flatness_ladder(n, table, config.check_samples, quad, kernel)
        out["target_c2"] = Discs.target_margins(n, table, config.check_samples, quad, kernel,
                                                sign=config.sign)["c2"]

        domain = Discs.domain_c2(table, quad, kernel, profile_sign=config.sign)
        disc = Discs.c2_family(n, table)
        out["disc_c2"] = Discs.certify_disc(disc, domain, config.disc_samples)
        out["derivative_c2"] = Lab.derivative_check(disc)
        rogue = Discs.certify_disc(Discs.rogue_disc(n, table), domain, config.disc_samples)
        out["rogue"] = {"cert": rogue, "passed": not rogue.passed}
    return out


def _c3_suite(config, table, summands, n):
    """Levi, target and disc checks of the n-th cusp summand."""
    kernel = MollifierKernel.default(config.quad)
    summand = summands[n - 1]
    out = {"summand": summand}
    out["sheets"] = Cusp.sheet_disjointness(summand.geo)
    out["stability"] = Cusp.levi_stability(n, table, summand.geo, config.shell, config.dirs,
                                           config.seed, config.quad, kernel,
                                           base=(summand.C, summand.c))
    out["psh"] = Cusp.psh_check(summand, config.levi_points, config.dirs, config.seed, config.shell, kernel)
    out["target_c3"] = Discs.target_margins(n, table, config.check_samples, config.quad, kernel,
                                            summands=summands, sign=config.sign)["c3"]
    domain = Discs.domain_c3(table, summands, config.quad, kernel, profile_sign=config.sign)
    disc = Discs.c3_family(n, table)
    out["disc_c3"] = Discs.certify_disc(disc, domain, config.disc_samples)
    out["derivative_c3"] = Lab.derivative_check(disc)
    return out


class Lab:
    """
    Command-line front end: parameter tables, verification runs and decay sweeps.
    """

    @staticmethod
    def jsonable(obj):
        """Recursively convert report values; mpf values become exact mantissa/exponent pairs."""
        if isinstance(obj, mpf):
            return utils.encode(obj) if mp.isfinite(obj) else str(obj)
        if isinstance(obj, mpc):
            return [Lab.jsonable(obj.real), Lab.jsonable(obj.imag)]
        if hasattr(obj, "to_dict"):
            return Lab.jsonable(obj.to_dict())
        if isinstance(obj, dict):
            return {str(k): Lab.jsonable(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [Lab.jsonable(v) for v in obj]
        if isinstance(obj, (np.bool_, bool)):
            return bool(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if is_dataclass(obj):
            return Lab.jsonable(asdict(obj))
        return obj

    @staticmethod
    def collect_flags(obj, path=""):
        """(path, flag) for every ``passed`` key of a jsonable report section.

        A ``cert`` next to its own ``passed`` verdict is skipped: the rogue
        disc control passes when its certificate fails.
        """
        flags = []
        if isinstance(obj, dict):
            for key, value in obj.items():
                sub = "{}/{}".format(path, key) if path else str(key)
                if key == "passed":
                    flags.append((path, bool(value)))
                elif key == "cert" and "passed" in obj:
                    continue
                else:
                    flags.extend(Lab.collect_flags(value, sub))
        elif isinstance(obj, list):
            for i, value in enumerate(obj):
                flags.extend(Lab.collect_flags(value, "{}/{}".format(path, i)))
        return flags

    @staticmethod
    def derivative_check(disc, step=1e-6):
        """Finite-difference against closed-form derivative of a disc at 0."""
        with utils.at_least(disc.bits):
            fd = Discs.fd_derivative(disc, step)
            exact = disc.derivative()
            err = mp.sqrt(mp.fsum(abs(a - b) ** 2 for a, b in zip(fd, exact)))
            size = mp.sqrt(mp.fsum(abs(b) ** 2 for b in exact))
            rel = err / size
        return {"rel_error": rel, "step": step, "passed": bool(rel <= mpf("1e-8"))}

    @staticmethod
    def kernel_suite(config):
        kernel = MollifierKernel.default(config.quad)
        suite = Profile.harmonic_reproduction(kernel, seed=config.seed)
        if not suite["passed"]:
            raise QuadratureError("kernel reproduction suite failed: {}".format(suite["max_error"]))
        return kernel, suite

    @staticmethod
    def _map(config, fn, args_list):
        if config.jobs > 1 and len(args_list) > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                return list(pool.map(fn, *zip(*args_list)))
        return [fn(*args) for args in args_list]

    @staticmethod
    def cmd_params(config):
        """Build the parameter table and write params.json."""
        table = Params.build_table(config.a_rule, config.n_max, config.precision_bits)
        utils.atomic_write(config.path("params.json"), table.to_json())
        logger.info("wrote %s", config.path("params.json"))
        return table

    @staticmethod
    def cmd_verify(config, which=None):
        """Run the certification suites; write report.json and blowup.csv.

        Returns
        -------
        int
            0 when every check passes, 1 otherwise
        """
        which = which or config.which
        kernel, suite = Lab.kernel_suite(config)
        table = Lab.cmd_params(config)
        report = RunReport(config=config.to_dict(), params=table.to_dict())
        report.sections["kernel"] = suite
        checks = Params.check_table(table)
        report.sections["params_checks"] = {"checks": checks, "passed": all(checks.values())}

        indices = list(table.indices())
        c2 = Lab._map(config, _c2_suite, [(config, table, n) for n in indices])
        report.sections["c2"] = {str(n): res for n, res in zip(indices, c2)}
        certs = {n: res["disc_c2"] for n, res in zip(indices, c2)}

        with utils.at_least(table.precision_bits):
            baseline_domain = Discs.domain_c2(table, config.quad, kernel, profile_sign=config.sign)
            delta = mpf("0.1")
            line = Discs.linear_family(delta, baseline_domain)
            line_cert = Discs.certify_disc(line, baseline_domain, config.disc_samples)
            baseline = {"cert": line_cert, "passed": line_cert.passed}
            if line_cert.passed:
                baseline["bound"] = Discs.kobayashi_upper(line, line_cert, line.point(0),
                                                          baseline_domain.normal)
            baseline["depth_identity"] = baseline_domain.depth_identity(delta)
            baseline["origin_gradient"] = baseline_domain.origin_gradient()
        report.sections["baseline"] = baseline

        if which in ("c3", "all"):
            table, summands = Cusp.build_summands(table, config.shell, config.dirs, config.seed,
                                                  config.quad, kernel)
            report.params = table.to_dict()
            c3 = Lab._map(config, _c3_suite, [(config, table, summands, n) for n in indices])
            report.sections["c3"] = {str(n): res for n, res in zip(indices, c3)}
            certs = {n: res["disc_c3"] for n, res in zip(indices, c3)}

        passed_certs = {n: cert for n, cert in certs.items() if cert.passed}
        frame = Discs.blowup_table(table, passed_certs)
        with utils.at_least(table.precision_bits):
            report.sections["blowup"] = {
                "direction": "nu" if "c3" in report.sections else "X_n",
                "rows": frame.to_dict(orient="records"),
                "passed": bool(len(passed_certs) == len(certs) and all(
                    abs(row["bound_times_delta"] * row["a_n"] - 1) <= mpf(2) ** (-(table.precision_bits - 16))
                    for _, row in frame.iterrows()))}
        csv = Discs.format_frame(frame, table.precision_bits).to_csv(index=False, lineterminator="\n")
        utils.atomic_write(config.path("blowup.csv"), csv)
        utils.atomic_write(config.path("report.json"), report.to_json())
        if report.passed:
            logger.info("all checks passed")
            return EXIT_PASS
        logger.error("failed checks: %s", ", ".join(report.failures()))
        return EXIT_CERT

    @staticmethod
    def decay_frame(table, certs):
        """log10 of delta_n, the certified bound and the 1/delta_n baseline, per n.

        ``certs`` are c2 disc certificates, so the bound is taken along the
        disc direction X_n = (r_n / (a_n delta_n), 1) and not along the normal;
        the ``direction`` column records this.
        """
        frame = Discs.blowup_table(table, certs)
        with utils.at_least(table.precision_bits):
            for col, src in (("log10_delta", "delta_n"), ("log10_bound", "upper_bound"),
                             ("log10_baseline", "baseline_bound")):
                frame[col] = [float(mp.log10(v)) for v in frame[src]]
        frame["direction"] = "X_n"
        return frame[["n", "direction", "delta_n", "upper_bound", "baseline_bound", "log10_delta",
                      "log10_bound", "log10_baseline"]]

    @staticmethod
    def decay_figure(frame):
        """Log-log line chart of the certified bound along X_n and the baseline against delta_n."""
        plt.rcParams["svg.hashsalt"] = "kobayashipy"
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(frame["log10_delta"], frame["log10_bound"], "o-", label="F(P, X_n) <= 1/(a_n delta_n)")
        ax.plot(frame["log10_delta"], frame["log10_baseline"], "s--", label="linear baseline 1/delta_n")
        ax.set_xlabel("log10 delta_n")
        ax.set_ylabel("log10 upper bound along X_n")
        ax.legend()
        return fig

    @staticmethod
    def cmd_sweep(config, n_list=None):
        """Certify the c2 discs for n in n_list and write decay.csv and decay.svg.

        The curve is the c2 bound along X_n; the normal-direction bounds of the
        c3 family are in blowup.csv of ``verify --which c3``.
        """
        n_list = list(n_list or config.n_list or range(1, config.n_max + 1))
        Lab.kernel_suite(config)
        table = Params.build_table(config.a_rule, config.n_max, config.precision_bits)
        domain = Discs.domain_c2(table, config.quad, profile_sign=config.sign)
        certs = {}
        for n in n_list:
            certs[n] = Discs.certify_disc(Discs.c2_family(n, table), domain, config.disc_samples)
        failed = [n for n, cert in certs.items() if not cert.passed]
        frame = Lab.decay_frame(table, {n: c for n, c in certs.items() if c.passed})
        text = frame.copy()
        for col in ("delta_n", "upper_bound", "baseline_bound"):
            text[col] = [utils.sci(v, table.precision_bits) for v in text[col]]
        utils.atomic_write(config.path("decay.csv"), text.to_csv(index=False, lineterminator="\n"))
        fig = Lab.decay_figure(frame)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
        utils.atomic_write(config.path("decay.svg"), buf.getvalue())
        if failed:
            logger.error("disc certificates failed for n=%s", failed)
            return EXIT_CERT
        return EXIT_PASS

    @staticmethod
    def parser():
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--n-max", type=int, default=4)
        common.add_argument("--bits", type=int, default=512, help="mpmath mantissa bits")
        common.add_argument("--quad", type=int, default=64, help="kernel nodes per polar axis")
        common.add_argument("--grid", type=int, default=64, help="subharmonicity grid per polar axis")
        common.add_argument("--levi-points", type=int, default=1000)
        common.add_argument("--dirs", type=int, default=16, help="sampled Levi directions per point")
        common.add_argument("--shell", default="5,4,3,1",
                            help="Levi shell grid: radial,angular,offsets,phases")
        common.add_argument("--seed", type=int, default=20240101)
        common.add_argument("--a-rule", default="exp:10", help="exp:<c>, const:<v> or list:<v1>,<v2>,...")
        common.add_argument("--out", default="out")
        common.add_argument("--disc-samples", type=int, default=10000)
        common.add_argument("--check-samples", type=int, default=1000)
        common.add_argument("--jobs", type=int, default=1, help="worker processes for per-n suites")
        common.add_argument("--log-level", default="INFO")
        common.add_argument("--perturb", default=None, help=argparse.SUPPRESS)

        parser = argparse.ArgumentParser(prog="kobayashipy",
                                         description="Build and certify the infinite-type domains.")
        parser.add_argument("--version", action="version", version=__version__)
        sub = parser.add_subparsers(dest="command", required=True)
        sub.add_parser("params", parents=[common], help="write params.json")
        verify = sub.add_parser("verify", parents=[common], help="run every certificate")
        verify.add_argument("--which", choices=["c2", "c3", "all"], default="all")
        sweep = sub.add_parser("sweep", parents=[common], help="decay curve of the certified bounds")
        sweep.add_argument("--n-list", default=None, help="comma separated indices")
        return parser

    @staticmethod
    def run(argv=None):
        args = Lab.parser().parse_args(argv)
        logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO),
                            format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        try:
            config = RunConfig.from_args(args)
        except ValueError as exc:
            logger.error("invalid configuration: %s", exc)
            return EXIT_BUILD
        try:
            if args.command == "params":
                Lab.cmd_params(config)
                return EXIT_PASS
            if args.command == "verify":
                return Lab.cmd_verify(config, args.which)
            return Lab.cmd_sweep(config)
        except CertificationError as exc:
            logger.error("%s", exc)
            return EXIT_CERT
        except (ConstructionError, KobayashiError, ValueError) as exc:
            logger.error("%s", exc)
            return EXIT_BUILD
        except OSError as exc:
            logger.error("I/O error: %s", exc)
            return EXIT_IO


def main(argv=None):
    return Lab.run(argv)


if __name__ == "__main__":
    sys.exit(main())
