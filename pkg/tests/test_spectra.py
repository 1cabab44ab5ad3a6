import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import lattice_frequencies
from ladderlab.errors import CapacityError, IncompletenessError, InvariantError, ValidationError
from ladderlab.geometry import FlatTorus, RoundSphere, StandardStationaryMetric
from ladderlab.spectra import (
    SpectrumSlice,
    constant_shift_torus_spectrum,
    energy_form_product,
    joint_spectrum,
    pencil_joint_spectrum,
    product_joint_spectrum,
    slice_from_csv,
    slice_to_csv,
    sphere_harmonic_dim,
    sphere_laplace_spectrum,
    torus_laplace_spectrum,
)

TWO_PI = 2 * math.pi


def as_dict(spec, ndigits=10):
    return {round(float(w), ndigits): int(k) for w, k in zip(spec.omega, spec.mult)}


def brute_counter(lengths, cutoff, ndigits=10):
    return Counter(round(float(w), ndigits) for w in lattice_frequencies(lengths, cutoff))


class TestTorusSpectrum:
    def test_square(self):
        s = torus_laplace_spectrum((TWO_PI, TWO_PI), 1.5)
        assert as_dict(s) == {0.0: 1, 1.0: 4, round(math.sqrt(2), 10): 4}

    def test_circle(self):
        s = torus_laplace_spectrum((TWO_PI,), 3.5)
        assert as_dict(s) == {0.0: 1, 1.0: 2, 2.0: 2, 3.0: 2}

    def test_rectangle_against_enumeration(self):
        # frequencies |(k1, 2 k2)|: 2 comes from (+-2, 0) and (0, +-1); sqrt 5 from (+-1, +-1)
        s = torus_laplace_spectrum((TWO_PI, math.pi), 2.5)
        assert as_dict(s) == dict(brute_counter((TWO_PI, math.pi), 2.5))
        assert as_dict(s)[2.0] == 4
        assert as_dict(s)[round(math.sqrt(5), 10)] == 4

    @settings(max_examples=40, deadline=None)
    @given(
        L1=st.floats(1.0, 10.0),
        L2=st.floats(1.0, 10.0),
        cutoff=st.floats(0.1, 8.0),
    )
    def test_matches_enumeration(self, L1, L2, cutoff):
        s = torus_laplace_spectrum((L1, L2), cutoff)
        brute = lattice_frequencies((L1, L2), cutoff)
        assert int(s.mult.sum()) == brute.size
        assert np.all(np.diff(s.omega) > 0)
        assert np.all(s.mult >= 1)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            torus_laplace_spectrum((TWO_PI, TWO_PI), 1e5, max_entries=1000)

    def test_bad_input(self):
        with pytest.raises(ValidationError):
            torus_laplace_spectrum((TWO_PI, -1.0), 2.0)


class TestSphereSpectrum:
    def test_s3_first_level(self):
        s = sphere_laplace_spectrum(3, 1.0, 2.0)
        assert s.omega[1] == pytest.approx(math.sqrt(3))
        assert s.mult[1] == 4

    def test_s2_second_level(self):
        s = sphere_laplace_spectrum(2, 1.0, 3.0)
        i = np.argmin(abs(s.omega - math.sqrt(6)))
        assert s.omega[i] == pytest.approx(math.sqrt(6)) and s.mult[i] == 5

    def test_constants(self):
        s = sphere_laplace_spectrum(3, 1.0, 0.5)
        assert s.omega.tolist() == [0.0] and s.mult.tolist() == [1]

    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    def test_harmonic_dimension(self, d):
        # dimension of homogeneous polynomials of degree l in d+1 variables minus degree l-2
        for l in range(8):
            hom = math.comb(l + d, d)
            prev = math.comb(l - 2 + d, d) if l >= 2 else 0
            assert sphere_harmonic_dim(l, d) == hom - prev

    def test_s3_multiplicity_is_square(self):
        s = sphere_laplace_spectrum(3, 1.0, 20.0)
        for l, (w, k) in enumerate(zip(s.omega, s.mult)):
            assert w == pytest.approx(math.sqrt((l + 1) ** 2 - 1))
            assert k == (l + 1) ** 2

    def test_radius_scaling(self):
        a = sphere_laplace_spectrum(2, 1.0, 10.0)
        b = sphere_laplace_spectrum(2, 2.0, 5.0)
        assert np.allclose(a.omega / 2, b.omega)


class TestProductJoint:
    def test_345(self):
        surf = torus_laplace_spectrum((TWO_PI,), 4.5)
        sp = product_joint_spectrum(surf, [3])
        sl = sp.slice(3)
        lam, mult = sl.values()
        assert 5.0 in lam and -5.0 in lam
        assert mult[lam.tolist().index(5.0)] == 2

    def test_zero_sector(self):
        surf = torus_laplace_spectrum((TWO_PI, TWO_PI), 2.0)
        sl = product_joint_spectrum(surf, [0]).slice(0)
        assert sl.zero_modes == 1
        lam, _ = sl.values(include_zero_modes=True)
        assert 0.0 in lam
        lam, _ = sl.values()
        assert 0.0 not in lam

    def test_s3_m2(self):
        surf = sphere_laplace_spectrum(3, 1.0, 3.0)
        lam, mult = product_joint_spectrum(surf, [2]).slice(2).values()
        i = np.argmin(abs(lam - math.sqrt(7)))
        assert lam[i] == pytest.approx(math.sqrt(7)) and mult[i] == 4

    def test_symmetry_and_shell(self):
        surf = torus_laplace_spectrum((TWO_PI, 3.0), 12.0)
        sp = product_joint_spectrum(surf, range(0, 6))
        w2 = set(np.round(surf.omega_sq, 9).tolist())
        for m, sl in sp.slices.items():
            lam, mult = sl.values()
            assert np.array_equal(np.sort(-lam), lam)
            assert np.array_equal(mult, mult[::-1])
            assert np.all(np.abs(lam**2 - m * m - np.sort(np.repeat(surf.omega_sq, 1))[0]) >= -1e-12)
            for x in lam:
                assert round(x * x - m * m, 9) in w2

    def test_monotone_in_m(self):
        surf = torus_laplace_spectrum((TWO_PI, TWO_PI), 5.0)
        sp = product_joint_spectrum(surf, range(1, 6))
        pos = [sp.slice(m).values()[0] for m in range(1, 6)]
        pos = [p[p > 0] for p in pos]
        for a, b in zip(pos, pos[1:]):
            assert np.all(b > a)

    def test_incompleteness(self):
        surf = torus_laplace_spectrum((TWO_PI, TWO_PI), 5.0)
        with pytest.raises(IncompletenessError):
            product_joint_spectrum(surf, [10], band=(math.sqrt(2), 1.0))
        sl = product_joint_spectrum(surf, [3]).slice(3)
        with pytest.raises(IncompletenessError):
            sl.require(0.0, 10.0)

    def test_completeness_counts(self):
        surf = torus_laplace_spectrum((TWO_PI, 2.0), 9.0)
        for m in (1, 4, 7):
            sl = product_joint_spectrum(surf, [m]).slice(m)
            Lam = sl.complete_hi
            brute = lattice_frequencies((TWO_PI, 2.0), math.sqrt(Lam**2 - m * m))
            assert sl.count_in(0, Lam) == brute.size


class TestConstantShift:
    def test_single_mode(self):
        sp = constant_shift_torus_spectrum(1.0, [0.3, 0.0], (TWO_PI, TWO_PI), 2, 1.0)
        lam, _ = sp.slice(2).values()
        for v in (0.3 + math.sqrt(5), 0.3 - math.sqrt(5)):
            assert np.min(np.abs(lam - v)) < 1e-12

    def test_reduces_to_product(self):
        a = constant_shift_torus_spectrum(1.0, [0.0, 0.0], (TWO_PI, 3.0), [1, 2, 5], 8.0)
        surf = torus_laplace_spectrum((TWO_PI, 3.0), 8.0)
        b = product_joint_spectrum(surf, [1, 2, 5])
        for m in (1, 2, 5):
            la, ma = a.slice(m).values()
            lb, mb = b.slice(m).values()
            assert np.allclose(la, lb, atol=1e-12) and np.array_equal(ma, mb)

    def test_rest_mass(self):
        lam, _ = constant_shift_torus_spectrum(2.0, [0.0], (TWO_PI,), 1, 0.5).slice(1).values()
        assert lam.tolist() == [-2.0, 2.0]

    def test_invariant(self):
        with pytest.raises(InvariantError):
            constant_shift_torus_spectrum(1.0, [1.0, 0.0], (TWO_PI, TWO_PI), 1, 2.0)

    def test_symmetric_as_multiset(self):
        sp = constant_shift_torus_spectrum(1.0, [0.3, 0.2], (TWO_PI, TWO_PI), 3, 6.0)
        lam, mult = sp.slice(3).values()
        a = np.repeat(lam, mult)
        assert np.allclose(np.sort(a), np.sort(-a), atol=1e-10)

    def test_completeness_against_enumeration(self):
        N, beta, m, r = 1.0, np.array([0.3, 0.0]), 2, 6.0
        sl = constant_shift_torus_spectrum(N, beta, (TWO_PI, TWO_PI), m, r).slice(m)
        hi = sl.complete_hi
        k = np.arange(-40, 41)
        K = np.stack(np.meshgrid(k, k, indexing="ij"), -1).reshape(-1, 2).astype(float)
        root = N * np.sqrt((K**2).sum(1) + m * m)
        allv = np.concatenate([K @ beta + root, K @ beta - root])
        assert sl.count_in(-hi, hi, positive_only=False) == int(np.sum(np.abs(allv) <= hi))


def _nearest_match(ref, got):
    return np.array([np.min(np.abs(got - v)) for v in ref])


class TestPencil:
    def test_constant_matches_closed_form(self):
        m = StandardStationaryMetric.constant(FlatTorus((TWO_PI, TWO_PI)), 1.0, [0.3, 0.0])
        for mass in (1, 3):
            sl = pencil_joint_spectrum(m, mass, 8.0).slice(mass)
            lam, _ = sl.values()
            ref, _ = constant_shift_torus_spectrum(1.0, [0.3, 0.0], (TWO_PI, TWO_PI), mass, 8.0).slice(mass).values()
            hi = sl.complete_hi
            ref = ref[np.abs(ref) < hi - 1e-6]
            assert _nearest_match(ref, lam).max() < 1e-8
            assert sl.max_imag < 1e-10

    def test_product_consistency(self):
        m = StandardStationaryMetric.product(FlatTorus((TWO_PI, 3.0)))
        sl = pencil_joint_spectrum(m, 2, 6.0).slice(2)
        ref, _ = product_joint_spectrum(torus_laplace_spectrum((TWO_PI, 3.0), 6.0), [2]).slice(2).values()
        ref = ref[np.abs(ref) < sl.complete_hi - 1e-6]
        lam, _ = sl.values()
        lam = lam[np.abs(lam) < sl.complete_hi - 1e-6]
        assert _nearest_match(ref, lam).max() < 1e-8
        assert _nearest_match(lam, ref).max() < 1e-8

    def test_cosine_lapse_symmetry(self):
        m = StandardStationaryMetric.cosine_lapse(FlatTorus((TWO_PI,)), 1.0, 0.1)
        lam, mult = pencil_joint_spectrum(m, 5, 40.0).slice(5).values()
        a = np.repeat(lam, mult)
        assert np.allclose(np.sort(a), np.sort(-a), atol=1e-8)

    def test_cauchy_convergence(self):
        m = StandardStationaryMetric.cosine_lapse(FlatTorus((TWO_PI,)), 1.0, 0.1)
        a = pencil_joint_spectrum(m, 3, 30.0).slice(3)
        b = pencil_joint_spectrum(m, 3, 60.0).slice(3)
        la, _ = a.values()
        lb, _ = b.values()
        assert _nearest_match(la[np.abs(la) < a.complete_hi * 0.9], lb).max() < 1e-6

    def test_variable_shift_on_t2(self):
        from ladderlab.geometry import ConstantField, CosineField

        surf = FlatTorus((TWO_PI, TWO_PI))
        m = StandardStationaryMetric(
            3, surf, CosineField(1.0, 0.1, (1, 0), surf.lengths), (CosineField(0.0, 0.1, (0, 1), surf.lengths), ConstantField(0.0, 2))
        )
        sl = pencil_joint_spectrum(m, 2, 6.0).slice(2)
        lam, mult = sl.values()
        a = np.repeat(lam, mult)
        assert np.allclose(np.sort(a), np.sort(-a), atol=1e-8)
        assert sl.max_imag < 1e-8

    def test_methods_agree(self):
        from ladderlab.geometry import ConstantField, CosineField

        surf = FlatTorus((TWO_PI, TWO_PI))
        m = StandardStationaryMetric(
            3, surf, CosineField(1.0, 0.1, (1, 1), surf.lengths), (CosineField(0.0, 0.1, (0, 1), surf.lengths), ConstantField(0.0, 2))
        )
        a = pencil_joint_spectrum(m, 2, 6.0, method="hermitian")
        b = pencil_joint_spectrum(m, 2, 6.0, method="companion")
        assert a.meta["method"] == "hermitian" and b.meta["method"] == "companion"
        la, ma = a.slice(2).values()
        lb, mb = b.slice(2).values()
        assert np.allclose(la, lb, atol=1e-10) and np.array_equal(ma, mb)

    def test_blocks(self):
        const = StandardStationaryMetric.constant(FlatTorus((TWO_PI, TWO_PI)), 1.0, [0.3, 0.0])
        sp = pencil_joint_spectrum(const, 1, 5.0)
        assert sp.meta["largest_block"] == 1 and sp.meta["blocks"] == sp.meta["basis_size"]
        cos = StandardStationaryMetric.cosine_lapse(FlatTorus((TWO_PI, TWO_PI)), 1.0, 0.2)
        sp = pencil_joint_spectrum(cos, 1, 5.0)
        # a lapse varying along x1 couples only modes with equal k2
        assert sp.meta["blocks"] == 11

    def test_zero_mass_falls_back(self, product_t2):
        cos = StandardStationaryMetric.cosine_lapse(FlatTorus((TWO_PI,)), 1.0, 0.1)
        sp = pencil_joint_spectrum(cos, 0, 8.0)
        assert "companion" in sp.meta["method"]
        assert sp.slice(0).zero_modes == 1
        assert sp.meta["zero_algebraic"] == 2
        with pytest.raises(ValidationError):
            pencil_joint_spectrum(cos, 1, 8.0, method="qz")

    def test_dispatch(self, product_t2):
        sp = joint_spectrum(product_t2, [1, 2], 4.0)
        assert sp.provenance == "product"
        m = StandardStationaryMetric.constant(FlatTorus((TWO_PI, TWO_PI)), 1.0, [0.3, 0.0])
        assert joint_spectrum(m, [1], 4.0).provenance == "constant-shift"


class TestSlices:
    def test_count_closed_interval(self):
        sl = SpectrumSlice(1, np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1, 3, 3, 1]), 0.0, 5.0, 0)
        assert sl.count_in(1.0, 2.0) == 4
        assert sl.count_in(1.0, 1.0) == 3
        assert sl.count_in(-2.0, 2.0, positive_only=False) == 8
        assert sl.count_in(1.5, 1.9) == 0

    def test_csv_round_trip(self):
        surf = torus_laplace_spectrum((TWO_PI, 3.0), 5.0)
        sl = product_joint_spectrum(surf, [0]).slice(0)
        back = slice_from_csv(slice_to_csv(sl), sl.complete_lo, sl.complete_hi)
        assert back.zero_modes == sl.zero_modes
        assert np.array_equal(back.lam, sl.lam) and np.array_equal(back.mult, sl.mult)

    def test_empty_csv_needs_mass(self):
        sl = SpectrumSlice(4, np.zeros(0), np.zeros(0, np.int64), 0.0, 1.0, 0)
        text = slice_to_csv(sl)
        with pytest.raises(ValidationError):
            slice_from_csv(text, 0.0, 1.0)
        assert slice_from_csv(text, 0.0, 1.0, m=4).m == 4


class TestEnergyForm:
    def test_values(self):
        assert energy_form_product(5.0, 1.0) == 25.0
        assert energy_form_product(0.0, 3.0) == 0.0
        assert energy_form_product(-5.0, 2.0) == 50.0
        with pytest.raises(ValidationError):
            energy_form_product(1.0, -1.0)

    @given(lam=st.floats(-1e3, 1e3), nrm=st.floats(0, 1e3))
    def test_positive_off_kernel(self, lam, nrm):
        e = energy_form_product(lam, nrm)
        assert (e > 0) == (lam * lam * nrm > 0)
