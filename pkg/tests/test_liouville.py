import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderlab.errors import EmptyLadderError, ValidationError
from ladderlab.geometry import FlatTorus, RoundSphere, StandardStationaryMetric
from ladderlab.liouville import (
    liouville_volume,
    sphere_constant,
    volume_closed_form_product,
    volume_montecarlo,
    volume_quadrature,
    weyl_prediction,
)

PI = math.pi
TWO_PI = 2 * PI


class TestClosedForm:
    def test_t2(self):
        assert volume_closed_form_product(4 * PI**2, math.sqrt(2), 3) == pytest.approx(8 * math.sqrt(2) * PI**3, rel=1e-14)

    def test_limit(self):
        assert volume_closed_form_product(1.0, 1 + 1e-9, 3) == pytest.approx(TWO_PI, rel=1e-8)

    def test_n4(self):
        assert volume_closed_form_product(1.0, math.sqrt(2), 4) == pytest.approx(4 * math.sqrt(2) * PI, rel=1e-14)

    def test_empty(self):
        with pytest.raises(EmptyLadderError):
            volume_closed_form_product(1.0, 1.0, 3)
        with pytest.raises(EmptyLadderError):
            volume_closed_form_product(1.0, 0.5, 3)

    def test_sphere_constant(self):
        assert sphere_constant(2) == 2.0
        assert sphere_constant(3) == pytest.approx(TWO_PI)
        assert sphere_constant(4) == pytest.approx(4 * PI)
        assert sphere_constant(5) == pytest.approx(2 * PI**2)

    @given(v=st.floats(0.1, 100), nu=st.floats(1.01, 10), n=st.integers(2, 6))
    def test_linear_in_volume(self, v, nu, n):
        assert volume_closed_form_product(2 * v, nu, n) == pytest.approx(2 * volume_closed_form_product(v, nu, n))


class TestQuadrature:
    def test_product_t2(self, product_t2):
        r = volume_quadrature(product_t2, math.sqrt(2))
        assert r.value == pytest.approx(8 * math.sqrt(2) * PI**3, rel=1e-12)

    def test_product_s3(self, product_s3):
        r = volume_quadrature(product_s3, 1.7)
        ref = volume_closed_form_product(2 * PI**2, 1.7, 4)
        assert r.value == pytest.approx(ref, rel=1e-10)

    def test_below_minimum(self, cosine_t2):
        assert volume_quadrature(cosine_t2, 0.5).value == 0.0

    def test_dimension_mismatch(self, product_t2):
        with pytest.raises(ValidationError):
            volume_quadrature(product_t2, 1.5, n=4)

    def test_n2_horizon_warning(self):
        m = StandardStationaryMetric.cosine_lapse(FlatTorus((TWO_PI,)), 1.0, 0.2)
        with pytest.warns(RuntimeWarning):
            r = volume_quadrature(m, 1.1)
        assert np.isfinite(r.value) and r.value > 0

    def test_monotone_in_nu(self, cosine_t2):
        vals = [volume_quadrature(cosine_t2, nu).value for nu in (1.0, 1.1, 1.3, 1.6)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.slow
class TestMonteCarlo:
    def test_product_oracle(self, product_t2):
        r = volume_montecarlo(product_t2, math.sqrt(2), samples=10**6, seed=1)
        assert abs(r.value - 8 * math.sqrt(2) * PI**3) < 3 * r.error

    def test_cosine_matches_quadrature(self, cosine_t2):
        q = volume_quadrature(cosine_t2, 1.5)
        mc = volume_montecarlo(cosine_t2, 1.5, samples=10**6, seed=2)
        assert abs(q.value - mc.value) < 3 * math.hypot(q.error, mc.error)

    def test_constant_shift_matches_quadrature(self, torus2):
        m = StandardStationaryMetric.constant(torus2, 1.2, [0.3, -0.2])
        q = volume_quadrature(m, 1.6)
        mc = volume_montecarlo(m, 1.6, samples=10**6, seed=3)
        assert abs(q.value - mc.value) < 3 * math.hypot(q.error, mc.error)


class TestMonteCarloBasics:
    def test_reproducible(self, cosine_t2):
        a = volume_montecarlo(cosine_t2, 1.5, samples=2 * 10**4, seed=7)
        b = volume_montecarlo(cosine_t2, 1.5, samples=2 * 10**4, seed=7)
        c = volume_montecarlo(cosine_t2, 1.5, samples=2 * 10**4, seed=8)
        assert a.value == b.value and a.error == b.error
        assert a.value != c.value

    def test_empty_region(self, cosine_t2):
        r = volume_montecarlo(cosine_t2, 0.5, samples=10**4)
        assert r.value == 0.0 and r.error == 0.0

    def test_too_few_samples(self, cosine_t2):
        with pytest.raises(ValidationError):
            volume_montecarlo(cosine_t2, 1.5, samples=100)

    def test_critical_warning(self, cosine_t2):
        with pytest.warns(RuntimeWarning):
            volume_montecarlo(cosine_t2, 1.2, samples=10**4, dq=1e-3)


class TestPrediction:
    def test_t2(self):
        mu = 8 * math.sqrt(2) * PI**3
        assert weyl_prediction(mu, 0.5, 100, 3) == pytest.approx(TWO_PI * math.sqrt(2) * 100)

    def test_zero(self):
        assert weyl_prediction(0.0, 0.5, 10, 3) == 0.0

    def test_smoothed_cancellation(self):
        assert weyl_prediction(4 * PI**2, 1.0, 10, 3, mode="smoothed") == pytest.approx(10.0)

    def test_both_branches(self):
        assert weyl_prediction(5.0, 0.5, 10, 3, both_branches=True) == pytest.approx(2 * weyl_prediction(5.0, 0.5, 10, 3))

    def test_invalid(self):
        with pytest.raises(ValidationError):
            weyl_prediction(-1.0, 0.5, 10, 3)
        with pytest.raises(ValidationError):
            weyl_prediction(1.0, 0.5, 10, 3, mode="fuzzy")


def test_best_value_dispatch(product_t2, cosine_t2):
    assert liouville_volume(product_t2, math.sqrt(2)).method == "closed-form"
    assert liouville_volume(cosine_t2, 1.5).method == "quadrature"
