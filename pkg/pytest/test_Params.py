
#%%
from kobayashipy import Params, ParamTable, utils
from kobayashipy.exceptions import DomainError, NoRoot
from types import SimpleNamespace
from mpmath import mp, mpf
import pytest
import numpy as np


#%%
class TestParams:

    @pytest.fixture
    def small_rates(self):
        return SimpleNamespace(a=[None, mpf(4)], r=[mpf(1) / 4, mpf(1) / 64])

    def test_next_radius(self):
        assert Params.next_radius(4, mpf(1) / 4) == mpf(1) / 64
        with utils.precision(512):
            result = Params.next_radius(mp.exp(11), mpf(1) / 4)
            assert abs(result - mp.exp(-11) / 16) <= mpf(10) ** -150 * result

    def test_next_radius_domain(self):
        with pytest.raises(DomainError):
            Params.next_radius(2, mpf(1) / 4)
        with pytest.raises(DomainError):
            Params.next_radius(10, mpf(1) / 2)

    def test_existence_margin(self):
        assert Params.existence_margin(mp.exp(9)) < 0
        assert Params.existence_margin(mp.exp(10)) > 0

    def test_solve_b_no_root(self):
        with pytest.raises(NoRoot):
            Params.solve_b(mp.exp(9))

    def test_solve_b_large_rate(self):
        with utils.precision(256):
            b, bracket = Params.solve_b(mp.exp(40), full_output=True)
            assert mpf("1e-9") < b < mpf("1e-8")
            assert abs(Params.b_equation(b, mp.exp(40))) <= mpf(10) ** -60
            assert bracket.f_lo < 0 <= bracket.f_hi
            assert bracket.lo < b < bracket.hi

    def test_solve_b_below_critical_point(self):
        with utils.precision(256):
            a = mp.exp(11)
            b = Params.solve_b(a)
            assert 0 < b < 1 / (4 * mp.log(a)) <= mpf(1) / 8

    def test_newton_agrees_with_bisection(self):
        with utils.precision(256):
            a = mp.exp(12)
            b, bracket = Params.solve_b(a, full_output=True)
            newton = Params.newton_b(a, bracket.lo / 2)
            assert abs(newton - b) <= mpf(10) ** -60 * b

    def test_newton_reports_non_convergence(self):
        with utils.precision(256):
            a = mp.exp(12)
            bracket = Params.solve_b(a, full_output=True)[1]
            with pytest.raises(ValueError):
                Params.newton_b(a, bracket.lo / 2, maxiter=1)

    def test_term_bound_small(self, small_rates):
        result = Params.term_bound(1, small_rates)
        assert np.allclose(float(result), 257.25, rtol=1e-12, atol=0)

    def test_term_bound_exponential(self):
        with utils.precision(512):
            a = mp.exp(11)
            rates = SimpleNamespace(a=[None, a], r=[mpf(1) / 4, mp.exp(-11) / 16])
            expected = mpf(1) / 2 + 16 * mp.exp(22) + (11 + mp.log(16)) / 44
            assert abs(Params.term_bound(1, rates) - expected) <= mpf(10) ** -100 * expected

    def test_next_delta(self):
        result = Params.next_delta(mpf(1) / 2, mpf("257.25"), 1, 4, mpf(1) / 64)
        expected = 0.5 / (257.25 * 2)
        assert np.allclose(float(result), expected, rtol=1e-12, atol=0)
        assert np.allclose(float(result), 9.718e-4, rtol=1e-3, atol=0)

    def test_next_delta_flatness_binds(self):
        result = Params.next_delta(mpf(1) / 2, mpf(1), 1, 4, mpf("1e-3"))
        assert np.allclose(float(result), 1e-3 / 5, rtol=1e-12, atol=0)

    def test_next_delta_domain(self):
        with pytest.raises(DomainError):
            Params.next_delta(mpf(1), mpf(2), 1, 4, mpf(1) / 64)

    def test_mollifier_radius_is_quarter_radius(self, table):
        with utils.precision(table.precision_bits):
            for n in table.indices():
                assert Params.mollifier_radius(n, table) == table.r[n] / 4

    def test_growth_rules(self):
        with utils.precision(256):
            assert Params.growth_rule("exp:10")(2) == mp.exp(12)
            assert Params.growth_rule("const:e9")(5) == mp.exp(9)
            assert Params.growth_rule("const:5000")(1) == 5000
            rule = Params.growth_rule("list:e11,e12")
            assert rule(2) == mp.exp(12)
            with pytest.raises(DomainError):
                rule(3)
        with pytest.raises(ValueError):
            Params.growth_rule("poly:3")

    @pytest.mark.parametrize("spec", ["exp:abc", "const:x9", "const:", "list:e11,zz", "list:"])
    def test_malformed_growth_rules(self, spec):
        with pytest.raises(ValueError):
            Params.growth_rule(spec)


class TestParamTable:

    def test_shapes(self, table):
        assert table.n_max == 4
        assert len(table.a) == len(table.r) == 6
        assert len(table.delta) == len(table.b) == len(table.d) == 5
        assert table.r[0] == mpf(1) / 4
        assert table.delta[0] == mpf(1) / 2
        assert not table.has_levi_constants()

    def test_first_terms(self, table):
        with utils.precision(table.precision_bits):
            assert abs(table.r[1] - mp.exp(-11) / 16) <= mpf(10) ** -140 * table.r[1]
            assert table.r_tilde[1] == table.r[2] ** 3
            assert table.d[1] == table.r_tilde[1] ** 2

    def test_sequences_decrease(self, table):
        for n in range(1, table.n_max):
            assert table.r[n + 1] < table.r[n]
            assert table.b[n + 1] < table.b[n]
            assert table.delta[n + 1] < table.delta[n]

    def test_check_table(self, table):
        checks = Params.check_table(table)
        assert all(checks.values()), [name for name, ok in checks.items() if not ok]

    def test_flatness_far_below_double_range(self, table):
        with utils.precision(table.precision_bits):
            assert table.r[4] ** 4 < mpf(10) ** -300
            assert table.delta[4] > 0

    def test_json_round_trip(self, table):
        text = table.to_json()
        back = ParamTable.from_json(text)
        assert back.to_json() == text
        assert back.delta == table.delta
        assert back.brackets[1].scan_steps == table.brackets[1].scan_steps

    def test_deterministic(self, table):
        again = Params.build_table("exp:10", 4, 512)
        assert again.to_json() == table.to_json()

    def test_too_small_rate(self):
        with pytest.raises(NoRoot) as info:
            Params.build_table("const:e9", 2, 512)
        assert info.value.index == 1
        assert str(info.value).startswith("n=1")

    def test_non_increasing_rates(self):
        with pytest.raises(DomainError):
            Params.build_table("const:e11", 2, 512)

    def test_low_precision(self):
        with pytest.raises(DomainError):
            Params.build_table("exp:10", 2, 128)

    def test_small_first_rate_warns(self):
        with pytest.warns(UserWarning):
            table = Params.build_table("exp:8.9", 1, 256)
        assert table.b[1] > 0

    def test_user_list(self):
        table = Params.build_table("list:e11,e12", 1, 256)
        with utils.precision(256):
            assert table.a[1] == mp.exp(11)
            assert table.a[2] == mp.exp(12)

    def test_tail_sum(self, table):
        with utils.precision(table.precision_bits):
            for n in table.indices():
                assert Params.tail_sum(n, table) <= table.delta[n] / 2
            assert Params.tail_sum(table.n_max, table) == 0
