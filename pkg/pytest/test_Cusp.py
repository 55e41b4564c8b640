
#%%
from kobayashipy import Cusp, Levi, Profile, utils
from dataclasses import replace
from kobayashipy.exceptions import InsideCore, NotOnVariety, OutsideTube
from mpmath import mp, mpc, mpf
import pytest
import numpy as np


#%%
class TestVariety:

    def test_zeta_of_cusp_point(self):
        assert Cusp.zeta_of_cusp_point((8, 4)) == 2
        assert Cusp.zeta_of_cusp_point((-8, 4)) == -2
        assert Cusp.zeta_of_cusp_point((0, 0)) == 0
        zeta = mpc("0.3", "0.4")
        assert abs(Cusp.zeta_of_cusp_point((zeta ** 3, zeta ** 2)) - zeta) <= mpf(10) ** -14

    def test_not_on_variety(self):
        with pytest.raises(NotOnVariety):
            Cusp.zeta_of_cusp_point((1, 2))

    def test_nearest_sheet_labels(self):
        # zeta = 2 is the principal root of t = 4, zeta = -2 is not
        assert Cusp.nearest_sheet((8, 4)).sheet == "V2"
        assert Cusp.nearest_sheet((-8, 4)).sheet == "V1"
        choice = Cusp.nearest_sheet((mpc(8), mpc("4.01")))
        assert np.allclose(complex(choice.t), 4.0, rtol=1e-14, atol=0)
        assert np.allclose(float(choice.dist), 0.01, rtol=1e-10, atol=0)

    def test_q_corrector(self):
        assert np.allclose(float(Cusp.q_corrector((1, 0))), np.e, rtol=1e-12, atol=0)
        assert np.allclose(float(Cusp.q_corrector((0, 1))), np.e, rtol=1e-12, atol=0)
        assert Cusp.q_corrector((mpc(8), mpc(4))) == 0

    def test_q_vanishes_on_variety(self, light_table):
        with utils.precision(Cusp.working_bits(light_table)):
            assert Cusp.q_corrector(Cusp.cusp_point(mpc("0.3", "0.2"), light_table)) == 0


class TestGeometry:

    @pytest.fixture
    def geo(self, light_table):
        # the last index shares the precision of Cusp.cusp_point
        return Cusp.geometry(light_table.n_max, light_table)

    def test_radii(self, light_table, geo):
        with utils.precision(light_table.precision_bits):
            assert geo.r_tilde == light_table.r[3] ** 3
            assert geo.d == geo.r_tilde ** 2
        assert geo.working_bits > light_table.precision_bits

    def test_profiles(self):
        assert Cusp.h_profile(mpf("0.5")) == 0
        assert Cusp.h_profile(1) == 1
        assert Cusp.chi_profile(mpf("0.25")) == 1
        assert Cusp.chi_profile(1) == 0
        assert 0 < Cusp.chi_profile(mpf("0.75")) < 1

    def test_projection_fixed_point(self, light_table, geo):
        z = Cusp.cusp_point(mpc("0.5", "0.4"), light_table)
        assert Cusp.project_to_cusp(z, geo) == z

    def test_projection_of_nearby_point(self, light_table, geo):
        with utils.precision(geo.working_bits):
            zeta = mpc("0.5", "0.4")
            s, t = Cusp.cusp_point(zeta, light_table)
            eta = geo.d / 10 * mp.expjpi(mpf(1) / 3)
            z = (s, t + eta)
            p = Cusp.project_to_cusp(z, geo)
            assert p[0] == s
            assert abs(p[1] - t) <= abs(eta) / 10 ** 6
            assert abs(p[1] - z[1]) <= 2 * abs(eta)
            assert Cusp.project_to_cusp(p, geo) == p

    def test_projection_of_generic_offset(self, light_table, geo):
        with utils.precision(geo.working_bits):
            s, t = Cusp.cusp_point(mpc("0.8", "0.6"), light_table)
            eta = (geo.d / 10 * mp.expjpi(mpf(1) / 5), geo.d / 10 * mp.expjpi(mpf(1) / 3))
            z = (s + eta[0], t + eta[1])
            p = Cusp.project_to_cusp(z, geo)
            assert p[0] == z[0]
            assert abs(p[0] ** 2 - p[1] ** 3) <= mpf(10) ** -100
            assert Cusp.project_to_cusp(p, geo) == p
            size = mp.sqrt(abs(eta[0]) ** 2 + abs(eta[1]) ** 2)
            assert mp.sqrt(abs(p[0] - z[0]) ** 2 + abs(p[1] - z[1]) ** 2) <= 2 * size

    def test_inside_core(self, geo):
        with pytest.raises(InsideCore):
            Cusp.project_to_cusp((mpc(0), geo.r_tilde / 2), geo)

    def test_outside_tube(self, light_table, geo):
        with utils.precision(geo.working_bits):
            s, t = Cusp.cusp_point(mpc("0.5"), light_table)
            z = (s, t + 2 * geo.d)
        with pytest.raises(OutsideTube):
            Cusp.project_to_cusp(z, geo)

    def test_cutoff(self, light_table, geo):
        with utils.precision(geo.working_bits):
            assert Cusp.cutoff_chi_n((geo.r_tilde / 2, mpc(0)), geo) == 1
            s, t = Cusp.cusp_point(mpc("0.5"), light_table)
            assert Cusp.cutoff_chi_n((s, t + geo.d * mpf("1.01")), geo) == 0
            assert Cusp.cutoff_chi_n((s, t + geo.d), geo) < mpf(10) ** -100
            assert Cusp.cutoff_chi_n((s, t), geo) == 1
            mid = Cusp.cutoff_chi_n((s, t + geo.d * mp.sqrt(mpf("0.7"))), geo)
            assert abs(mid - Cusp.chi_profile(mpf("0.7"))) <= mpf(10) ** -50

    def test_cutoff_transition_ball(self, light_table, geo):
        with utils.precision(geo.working_bits):
            zeta = mp.sqrt(mpf("0.9") * geo.r_tilde)
            s, t = Cusp.cusp_point(zeta, light_table)
            z = (s, t + geo.d * mp.sqrt(mpf("0.9")))
            n2 = abs(z[0]) ** 2 + abs(z[1]) ** 2
            assert mpf(9) / 16 < n2 / geo.r_tilde ** 2 < 1
            x = Cusp.nearest_sheet(z).dist ** 2 / geo.d ** 2
            expected = Cusp.chi_profile(Cusp.h_profile(n2 / geo.r_tilde ** 2) * x)
            value = Cusp.cutoff_chi_n(z, geo)
            assert abs(value - expected) <= mpf(10) ** -50
            assert value - Cusp.chi_profile(x) > mpf("0.5")

    def test_sheets_disjoint(self, geo):
        assert Cusp.sheet_disjointness(geo, samples=64)["passed"]

    def test_shell_grid(self, light_table, geo):
        grid = Cusp.shell_grid(geo, light_table, 3, 2, 3, 2)
        pts = grid.points()
        assert len(pts) == 3 * 2 * 3 * 2
        with utils.precision(geo.working_bits):
            for p in pts:
                dist = Cusp.nearest_sheet(p).dist
                assert geo.d / 2 <= dist <= geo.d * (1 + mpf(10) ** -50)

    def test_shell_refinement_keeps_points(self, light_table, geo):
        coarse = Cusp.shell_grid(geo, light_table, 3, 2, 3, 2).fixed
        fine = Cusp.shell_grid(geo, light_table, 5, 4, 5, 4).fixed
        with utils.precision(geo.working_bits):
            for p in coarse:
                assert min(abs(p[0] - f[0]) + abs(p[1] - f[1]) for f in fine) <= geo.d * mpf(10) ** -50


class TestSummands:

    def test_p_n_zero_regions(self, light_table, kernel):
        geo = Cusp.geometry(1, light_table)
        with utils.precision(geo.working_bits):
            assert Cusp.p_n((geo.r_tilde / 2, mpc(0)), 1, light_table, geo, kernel=kernel) == 0
            inner = Cusp.cusp_point(light_table.r[2] / 2, light_table)
            assert Cusp.p_n(inner, 1, light_table, geo, kernel=kernel) == 0
            s, t = Cusp.cusp_point(mpc("0.5"), light_table)
            assert Cusp.p_n((s, t + geo.d * mpf("1.01")), 1, light_table, geo, kernel=kernel) == 0

    def test_p_n_restricts_to_rho(self, light_table, kernel):
        geo = Cusp.geometry(1, light_table)
        with utils.precision(geo.working_bits):
            for zeta in (light_table.r[1] * mpc("0.3", "0.5"), light_table.r[1] * mpf("-0.9")):
                value = Cusp.p_n(Cusp.cusp_point(zeta, light_table), 1, light_table, geo, kernel=kernel)
                expected = Profile.rho_k(zeta, 1, light_table, kernel=kernel)
                assert abs(value - expected) <= mpf(10) ** -100 * max(abs(expected), 1)

    def test_p_n_uses_cutoff(self, light_table, kernel, monkeypatch):
        geo = Cusp.geometry(1, light_table)
        with utils.precision(geo.working_bits):
            s, t = Cusp.cusp_point(light_table.r[1] * mpc("0.5", "0.2"), light_table)
            z = (s, t + geo.d * mp.sqrt(mpf("0.7")))
            choice = Cusp.nearest_sheet(z)
            expected = Profile.rho_k(choice.zeta, 1, light_table, kernel=kernel) * Cusp.cutoff_chi_n(z, geo)
            value = Cusp.p_n(z, 1, light_table, geo, kernel=kernel)
            assert abs(Cusp.cutoff_chi_n(z, geo) - Cusp.chi_profile(mpf("0.7"))) <= mpf(10) ** -50
            assert abs(value - expected) <= mpf(10) ** -100 * max(abs(expected), 1)
            monkeypatch.setattr(Cusp, "cutoff_chi_n", staticmethod(lambda z, geo, choice=None: mpf(0)))
            assert Cusp.p_n(z, 1, light_table, geo, kernel=kernel) == 0

    def test_p_vanishes_near(self, light_table, kernel):
        geo = Cusp.geometry(1, light_table)
        with utils.precision(geo.working_bits):
            assert Cusp.p_vanishes_near((geo.r_tilde / 4, mpc(0)), 1, light_table, geo, geo.r_tilde / 4)
            s, t = Cusp.cusp_point(mpc("0.5"), light_table)
            far = (s, t + 3 * geo.d)
            h = Levi.STEP * geo.d
            assert Cusp.p_vanishes_near(far, 1, light_table, geo, h)
            assert Cusp.p_n(far, 1, light_table, geo, kernel=kernel) == 0
            assert not Cusp.p_vanishes_near((s, t + geo.d / 2), 1, light_table, geo, h)
            assert not Cusp.p_vanishes_near(far, 1, light_table, geo, 4 * geo.d)

    def test_k_gain(self):
        assert Cusp.k_gain(0, 1) == 0
        assert Cusp.k_gain(3, 2) == 3
        for C, c in ((mpf("1e5"), mpf("1e-200")), (mpf("0.5"), mpf(7))):
            K = Cusp.k_gain(C, c)
            assert -C + K * c >= 0
        with pytest.raises(ValueError):
            Cusp.k_gain(1, 0)

    def test_levi_constants(self, cusp_run):
        table, summands = cusp_run
        assert table.has_levi_constants()
        for sm in summands:
            assert sm.c > 0
            assert sm.C >= 0
            assert sm.K == Cusp.SAFETY * sm.C / sm.c
            assert sm.levi_margin >= 0

    def test_corrector_levi_matches_closed_form(self, cusp_run):
        table, summands = cusp_run
        geo = summands[0].geo
        p = Cusp.shell_grid(geo, table, 3, 2, 3, 2).fixed[-1]
        L = Levi._normalize(Cusp.special_directions(p)[0])
        with utils.precision(geo.working_bits):
            fd = Levi.levi_form_fd(Cusp.q_corrector, p, L, Levi.STEP * geo.d)
            exact = Levi.closed_form_levi_q(p, L)
            assert abs(fd - exact) <= mpf("1e-4") * exact

    def test_psh_check(self, cusp_run, kernel):
        _, summands = cusp_run
        result = Cusp.psh_check(summands[0], samples=20, directions=16, shell=(3, 2, 3, 2), kernel=kernel)
        assert result["passed"]
        assert result["min_relative"] >= -result["rtol"]
        assert result["report"].samples >= 36 * 16

    def test_psh_check_is_local(self, cusp_run, kernel):
        _, summands = cusp_run
        summand = summands[0]
        assert summand.C > 0
        # without the corrector the negative Levi directions of p_n must show
        bare = replace(summand, K=mpf(0), C=mpf(0))
        assert bare.levi_margin == 0
        result = Cusp.psh_check(bare, samples=20, directions=16, seed=1, shell=(3, 2, 3, 2), kernel=kernel)
        assert not result["passed"]
        assert result["min_relative"] < -mpf("0.5")

    def test_psh_check_detects_negative_term(self, cusp_run, kernel, monkeypatch):
        _, summands = cusp_run
        original = Cusp.psh_summand

        def sabotaged(z, *args, **kwargs):
            return original(z, *args, **kwargs) - mpf("1e600") * (abs(z[0]) ** 2 + abs(z[1]) ** 2)

        monkeypatch.setattr(Cusp, "psh_summand", staticmethod(sabotaged))
        result = Cusp.psh_check(summands[0], samples=4, directions=16, shell=(3, 2, 3, 2), kernel=kernel)
        assert not result["passed"]
        assert result["min_relative"] < -mpf("0.5")

    def test_psh_check_needs_levi_margin(self, cusp_run, kernel):
        _, summands = cusp_run
        weak = replace(summands[0], K=summands[0].K / 100)
        assert weak.levi_margin < 0
        result = Cusp.psh_check(weak, samples=4, directions=16, seed=1, shell=(3, 2, 3, 2), kernel=kernel)
        assert not result["passed"]

    def test_refinement_lowers_minimum(self, light_table, kernel):
        geo = Cusp.geometry(1, light_table)
        grid = Cusp.shell_grid(geo, light_table, 3, 2, 3, 2)
        C_grid, c_grid, grid_reports = Cusp.estimate_levi_constants(
            1, light_table, geo, grid, seed=1, kernel=kernel, full_output=True, refine=False)
        C, c, reports = Cusp.estimate_levi_constants(
            1, light_table, geo, grid, seed=1, kernel=kernel, full_output=True)
        assert C >= C_grid > 0
        assert c == c_grid
        assert reports["p"].samples > grid_reports["p"].samples
        with utils.precision(geo.working_bits):
            x = Cusp.nearest_sheet(reports["p"].argmin_point).dist ** 2 / geo.d ** 2
            assert mpf("0.4999") <= x <= mpf("1.0001")

    def test_levi_stability(self, light_table, kernel):
        geo = Cusp.geometry(1, light_table)
        result = Cusp.levi_stability(1, light_table, geo, shell=(3, 2, 3, 2), directions=16, kernel=kernel)
        assert result["c"] > 0
        assert result["C"] > 0
        assert result["fine_shell"] == [5, 4, 5, 4]
        assert result["rel_change_C"] < mpf("0.25")
        assert result["rel_change_c"] < mpf("0.25")
        assert result["passed"]

    def test_levi_stability_reuses_base(self, cusp_run, light_table, kernel):
        _, summands = cusp_run
        sm = summands[0]
        result = Cusp.levi_stability(1, light_table, sm.geo, shell=(3, 2, 3, 2), directions=16, seed=1,
                                     kernel=kernel, base=(sm.C, sm.c))
        assert result["C"] == sm.C and result["c"] == sm.c
        assert result["passed"]

    def test_rho_tilde_restriction(self, cusp_run, kernel):
        table, summands = cusp_run
        with utils.precision(Cusp.working_bits(table)):
            zeta = table.r[1] * mpc("0.4", "0.3")
            result = Cusp.rho_tilde(Cusp.cusp_point(zeta, table), table, summands)
            expected = mp.fsum(table.delta[k] * Profile.rho_k(zeta, k, table, kernel=kernel)
                               for k in table.indices())
            assert abs(result.value - expected) <= mpf(10) ** -100 * abs(expected)
            assert mp.isfinite(result.tail_hi)

    def test_rho_tilde_origin(self, cusp_run):
        table, summands = cusp_run
        result = Cusp.rho_tilde((0, 0), table, summands)
        assert result.value == 0
        with utils.precision(table.precision_bits):
            assert result.tail_hi == table.delta[2] / 2

    def test_rho_tilde_off_variety(self, cusp_run):
        table, summands = cusp_run
        result = Cusp.rho_tilde((mpc("0.1"), mpc("0.3")), table, summands)
        assert mp.isinf(result.tail_hi)
        assert result.value >= 0
