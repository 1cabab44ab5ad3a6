import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import lattice_frequencies
from ladderlab.counting import (
    INCONCLUSIVE_CLUSTERING,
    PASS,
    UpsilonResult,
    clustering_diagnostic,
    count_sharp,
    count_smoothed,
    detect_peaks,
    fit_weyl,
    ladder_report,
    persistent_peaks,
    singular_support_predict,
    tauberian_sandwich,
    upsilon1,
    upsilon2,
)
from ladderlab.errors import FitError, IncompletenessError, PreconditionError, ValidationError
from ladderlab.spectra import JointSpectrum, SpectrumSlice, product_joint_spectrum, sphere_laplace_spectrum, torus_laplace_spectrum
from ladderlab.testfunctions import TestFunction

TWO_PI = 2 * math.pi


def synthetic(values_by_m, hi=1e9):
    slices = {}
    for m, vals in values_by_m.items():
        lam = np.asarray(sorted(vals), dtype=float)
        lam, mult = np.unique(lam, return_counts=True) if lam.size else (lam, np.zeros(0, np.int64))
        slices[m] = SpectrumSlice(m, lam, mult, 0.0, hi, 0)
    return JointSpectrum(3, "synthetic", slices)


@pytest.fixture(scope="module")
def psi():
    return TestFunction(0.5)


class TestSharp:
    def test_circle_example(self):
        surf = torus_laplace_spectrum((TWO_PI,), 6.0)
        spec = product_joint_spectrum(surf, [4])
        assert count_sharp(spec, 1.0, 0.5, 4) == 5

    def test_empty(self):
        assert count_sharp(synthetic({3: []}), 1.0, 1.0, 3) == 0

    def test_closed_interval(self):
        spec = synthetic({2: [2.0, 2.0, 2.0, 3.5]})
        assert count_sharp(spec, 1.0, 0.0, 2) == 3
        assert count_sharp(spec, 1.1, 0.0, 2) == 0
        assert count_sharp(spec, 1.0, 1.5, 2) == 4

    def test_incomplete(self):
        surf = torus_laplace_spectrum((TWO_PI, TWO_PI), 3.0)
        spec = product_joint_spectrum(surf, [10])
        with pytest.raises(IncompletenessError):
            count_sharp(spec, 1.5, 0.5, 10)

    def test_bad_arguments(self):
        spec = synthetic({1: [1.0]})
        with pytest.raises(ValidationError):
            count_sharp(spec, 1.0, -0.1, 1)
        with pytest.raises(ValidationError):
            count_sharp(spec, 1.0, 0.5, 0)

    @settings(max_examples=25, deadline=None)
    @given(m=st.integers(1, 30), nu=st.floats(1.01, 2.5), C=st.floats(0.05, 2.0))
    def test_against_enumeration(self, m, nu, C):
        L = (TWO_PI, 4.0)
        hi = nu * m + C
        surf = torus_laplace_spectrum(L, math.sqrt(hi * hi - m * m) + 1.0)
        spec = product_joint_spectrum(surf, [m])
        lo = nu * m - C
        w = lattice_frequencies(L, math.sqrt(hi * hi - m * m) + 1.0)
        lam = np.sqrt(w**2 + m * m)
        assert count_sharp(spec, nu, C, m) == int(np.sum((lam >= lo) & (lam <= hi)))

    def test_both_branches(self):
        spec = synthetic({1: [-2.0, -1.0, 1.0, 2.0]})
        assert count_sharp(spec, 1.0, 0.5, 1) == 1
        assert count_sharp(spec, 1.0, 0.5, 1, both_branches=True) == 2


class TestSmoothed:
    def test_single_eigenvalue(self, psi):
        spec = synthetic({3: [3.0 * 1.2]})
        assert count_smoothed(spec, 1.2, psi, 3).value == pytest.approx(float(psi(0.0)), rel=1e-13)

    def test_linear_in_multiplicity(self, psi):
        a = count_smoothed(synthetic({2: [2.5]}), 1.0, psi, 2).value
        b = count_smoothed(synthetic({2: [2.5, 2.5, 2.5]}), 1.0, psi, 2).value
        assert b == pytest.approx(3 * a)
        assert a == pytest.approx(float(psi(0.5)))

    def test_direct_sum(self, psi):
        rng = np.random.default_rng(3)
        vals = rng.uniform(0, 200, 400)
        spec = synthetic({5: vals})
        got = count_smoothed(spec, 20.0, psi, 5).value
        X = psi.effective_radius
        near = vals[np.abs(vals - 100.0) <= X]
        assert got == pytest.approx(float(psi.direct(near - 100.0).sum()), abs=1e-9)


class TestUpsilon:
    def test_empty(self, psi):
        spec = synthetic({m: [] for m in range(6)})
        s = np.linspace(0, TWO_PI, 32, endpoint=False)
        assert np.all(upsilon1(spec, 1.0, psi, s, 5, 0.1).values == 0)
        assert np.all(upsilon2(spec, 1.0, psi, s, 5, 0.1).values == 0)

    def test_geometric_series(self, psi):
        nu, M, eps = 1.3, 400, 0.05
        spec = synthetic({m: [nu * m] for m in range(M + 1)})
        s = np.linspace(0, TWO_PI, 64, endpoint=False)
        p0 = float(psi(0.0))
        ref = p0 * (1 - np.exp((1j * s - eps) * (M + 1))) / (1 - np.exp(1j * s - eps))
        r1 = upsilon1(spec, nu, psi, s, M, eps)
        assert np.allclose(r1.values, ref, rtol=1e-10, atol=1e-10)
        assert r1.m0_contribution == pytest.approx(p0)

    def test_upsilon2_phase(self, psi):
        # one eigenvalue per m at nu m + 0.2: the phase carries lambda s
        nu, M, eps = 1.0, 50, 0.1
        spec = synthetic({m: [nu * m + 0.2] for m in range(M + 1)})
        s = np.array([0.0, 0.5, 1.0])
        v = upsilon2(spec, nu, psi, s, M, eps).values
        m = np.arange(M + 1)
        ref = [(float(psi(0.2)) * np.exp(-eps * m + 1j * (m + 0.2) * si)).sum() for si in s]
        assert np.allclose(v, ref, rtol=1e-12)

    def test_missing_slice(self, psi):
        spec = synthetic({0: [], 1: []})
        with pytest.raises(IncompletenessError):
            upsilon1(spec, 1.0, psi, [0.0], 3, 0.1)

    def test_bad_eps(self, psi):
        with pytest.raises(ValidationError):
            upsilon1(synthetic({0: []}), 1.0, psi, [0.0], 0, 0.0)


class TestPeaks:
    def test_detect_single(self):
        s = np.linspace(0, TWO_PI, 400, endpoint=False)
        vals = 1.0 / (1 - np.exp(1j * (s - 2.0) - 0.05))
        p = detect_peaks(s, vals)
        assert p.size == 1 and abs(p[0] - 2.0) < 2 * (s[1] - s[0])

    def test_persistent_drops_transient(self):
        s = np.linspace(0, TWO_PI, 400, endpoint=False)

        def res(eps, extra):
            v = 1.0 / (1 - np.exp(1j * (s - 1.0) - eps))
            if extra:
                v = v + 1.0 / (1 - np.exp(1j * (s - 4.0) - eps))
            return UpsilonResult(s, v, eps, 1.0, 10, np.zeros(1))

        out = persistent_peaks([res(0.2, True), res(0.1, False), res(0.05, True)])
        assert out.size == 1 and abs(out[0] - 1.0) < 0.05

    def test_persistent_empty(self):
        assert persistent_peaks([]).size == 0


class TestPredict:
    def test_zero(self):
        assert singular_support_predict([0.0], 1.5, 10.0) == [0.0]

    def test_torus_wraps_to_zero(self):
        nu = math.sqrt(2)
        sp = TWO_PI * nu / math.sqrt(nu * nu - 1)
        assert singular_support_predict([0.0, sp, -sp], nu, 10.0) == [0.0]

    def test_support_filter(self):
        assert singular_support_predict([0.0, 3.0], 1.0, 2.0) == [0.0]
        assert singular_support_predict([0.0, 3.0], 1.0, 3.0) == [0.0, 3.0]

    def test_negation_symmetric(self):
        out = singular_support_predict([0.0, 1.0, -1.0], 1.0, 5.0)
        assert out == pytest.approx([0.0, 1.0, TWO_PI - 1.0])

    def test_holonomy(self):
        assert singular_support_predict([2.0], 1.0, 5.0, holonomies=[0.5]) == pytest.approx([1.5])
        with pytest.raises(ValidationError):
            singular_support_predict([2.0, 1.0], 1.0, 5.0, holonomies=[0.5])


class TestFit:
    def test_exact_linear(self):
        m = np.arange(10, 60, 5)
        f = fit_weyl(m, 7 * m, 3, predicted=7.0, two_term=False)
        assert f.coef == pytest.approx(7.0) and f.residual_norm == pytest.approx(0.0, abs=1e-9)
        assert f.relative_error == pytest.approx(0.0, abs=1e-12)

    def test_two_term(self):
        m = np.arange(10, 100, 3).astype(float)
        f = fit_weyl(m, 2.5 * m**2 - 4 * m, 4)
        assert f.coef == pytest.approx(2.5) and f.coef2 == pytest.approx(-4.0)

    def test_degenerate(self):
        with pytest.raises(FitError):
            fit_weyl(np.arange(1, 10), np.ones(9), 2)
        with pytest.raises(FitError):
            fit_weyl([1, 2], [1, 2], 3)

    def test_product_t2_slope(self):
        ms = list(range(50, 201, 10))
        nu, C = math.sqrt(2), 0.5
        surf = torus_laplace_spectrum((TWO_PI, TWO_PI), math.sqrt((nu * 200 + C) ** 2 - 50**2) + 1)
        counts = []
        for m in ms:
            w = lattice_frequencies((TWO_PI, TWO_PI), math.sqrt((nu * m + C) ** 2 - m * m) + 0.5)
            lam = np.sqrt(w**2 + m * m)
            counts.append(int(np.sum(np.abs(lam - nu * m) <= C)))
        f = fit_weyl(ms, counts, 3, predicted=TWO_PI * nu)
        assert f.relative_error < 0.05
        spec = product_joint_spectrum(surf, ms, band=(nu, C))
        rep = ladder_report(spec, nu, ms, 3, TWO_PI * nu, C=C)
        assert rep.counts == counts
        assert rep.verdict == PASS


class TestClustering:
    def test_s3_clusters(self):
        surf = sphere_laplace_spectrum(3, 1.0, 400.0)
        ms = list(range(50, 201, 50))
        spec = product_joint_spectrum(surf, ms)
        d = clustering_diagnostic(spec, math.sqrt(2), ms)
        assert d.clustered and d.gap_cv < 0.1

    def test_torus_not_clustered(self):
        ms = list(range(50, 201, 50))
        surf = torus_laplace_spectrum((TWO_PI, TWO_PI), 300.0)
        spec = product_joint_spectrum(surf, ms, band=(math.sqrt(2), 3.0))
        assert not clustering_diagnostic(spec, math.sqrt(2), ms).clustered

    def test_report_inconclusive(self):
        ms = list(range(50, 201, 10))
        surf = sphere_laplace_spectrum(3, 1.0, 400.0)
        spec = product_joint_spectrum(surf, ms)
        rep = ladder_report(spec, math.sqrt(2), ms, 4, 1.0, C=0.5)
        assert rep.verdict == INCONCLUSIVE_CLUSTERING
        assert "clustering" in rep.to_dict()

    def test_report_needs_one_window(self):
        with pytest.raises(ValidationError):
            ladder_report(synthetic({1: []}), 1.0, [1], 3, 1.0)


class TestSandwich:
    def test_needs_nonneg(self, psi):
        with pytest.raises(PreconditionError):
            tauberian_sandwich(synthetic({1: [1.0]}), 1.0, 1.0, 0.5, 0.1, 1, psi)

    def test_brackets(self):
        psi = TestFunction(1.0, profile="autocorrelation")
        surf = torus_laplace_spectrum((TWO_PI, TWO_PI), 120.0)
        spec = product_joint_spectrum(surf, [60])
        r = tauberian_sandwich(spec, math.sqrt(2), 2.0, 0.5, 0.05, 60, psi)
        assert r.holds
        assert r.count_minus <= count_sharp(spec, math.sqrt(2), 2.0, 60) <= r.count_plus

    def test_far_spectrum(self):
        psi = TestFunction(1.0, profile="autocorrelation")
        spec = synthetic({1: [100.0]})
        r = tauberian_sandwich(spec, 1.0, 1.0, 0.5, 0.05, 1, psi)
        assert r.value <= r.upper and r.value < 1e-6
