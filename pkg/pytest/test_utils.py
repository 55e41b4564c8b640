
#%%
from kobayashipy import ScaledReal, utils
from mpmath import mp, mpf
import pytest
import numpy as np


#%%
class TestScaledReal:

    @pytest.fixture
    def values(self):
        return ScaledReal.from_value(mpf("0.5")), ScaledReal.from_value(4)

    def test_product(self, values):
        half, four = values
        result = float((half * four).value())
        assert np.allclose(result, 2.0, rtol=1e-12, atol=0)

    def test_sum_and_cancellation(self, values):
        half, four = values
        assert np.allclose(float((half + four).value()), 4.5, rtol=1e-12, atol=0)
        assert (four - four).sign == 0
        assert (four - four) == 0

    def test_far_below_double_range(self):
        tiny = ScaledReal.from_log(-2000)
        less_tiny = ScaledReal.from_log(-1000)
        assert tiny < less_tiny
        assert float(tiny.value()) == 0.0
        assert np.allclose(float((tiny / less_tiny).log_mag), -1000.0, rtol=1e-12, atol=0)

    def test_ordering_with_signs(self):
        minus_two, minus_one = ScaledReal.from_value(-2), ScaledReal.from_value(-1)
        zero, one = ScaledReal.from_value(0), ScaledReal.from_value(1)
        assert sorted([one, zero, minus_one, minus_two]) == [minus_two, minus_one, zero, one]

    def test_integer_power(self):
        result = ScaledReal.from_value(-2) ** 3
        assert result.sign == -1
        assert np.allclose(float(result.value()), -8.0, rtol=1e-12, atol=0)

    def test_fractional_power_of_negative(self):
        with pytest.raises(ValueError):
            ScaledReal.from_value(-2) ** mpf("0.5")

    def test_non_finite(self):
        with pytest.raises(ValueError):
            ScaledReal.from_value(mpf("inf"))

    def test_value_round_trip(self):
        with utils.precision(256):
            x = mpf(1) / 3
            back = ScaledReal.from_value(x).value()
            assert abs(back - x) <= mpf(2) ** -240 * x


class Testutils:

    def test_encode_is_exact(self):
        with utils.precision(512):
            x = mp.exp(-11) / 16
            pair = utils.encode(x)
        with utils.precision(1024):
            assert utils.decode(pair) == x

    def test_encode_zero_and_none(self):
        assert utils.encode(mpf(0)) == ["0", 0]
        assert utils.decode(["0", 0]) == 0
        assert utils.encode(None) is None

    def test_encode_negative(self):
        man, exp = utils.encode(mpf("-0.75"))
        assert man.startswith("-")
        assert utils.decode([man, exp]) == mpf("-0.75")

    def test_sci(self):
        result = utils.sci(mpf(1) / 8, 53)
        assert "e" in result
        assert mpf(result) == mpf(1) / 8

    def test_digits(self):
        assert utils.digits(53) == 15
        assert utils.digits(512) == 154

    def test_at_least_keeps_higher_precision(self):
        with utils.precision(300):
            with utils.at_least(100):
                assert mp.prec == 300
            with utils.at_least(400):
                assert mp.prec == 400

    def test_atomic_write(self, tmp_path):
        target = tmp_path / "sub" / "file.txt"
        utils.atomic_write(str(target), "line\n")
        assert target.read_text() == "line\n"
        assert [p.name for p in target.parent.iterdir()] == ["file.txt"]
