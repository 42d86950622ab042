"""Grid, transforms, derivatives, energies, dealiasing and the mollifier."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvlab.spectral import (
    Field,
    MollifierSpec,
    NonFiniteError,
    PeriodicGrid,
    bump_profile,
    dealias,
    mollify,
    sobolev_energy,
    spectral_derivative,
)

TWO_PI = 2 * math.pi


def random_field(grid, seed):
    return Field(grid, np.random.default_rng(seed).standard_normal(grid.N))


class TestPeriodicGrid:
    def test_abscissae_start_at_zero_and_are_uniform(self):
        g = PeriodicGrid(5.0, 40)
        assert g.x[0] == 0.0
        np.testing.assert_allclose(np.diff(g.x), 5.0 / 40, rtol=0, atol=1e-15)

    def test_wavenumbers_scaled_by_domain(self):
        g = PeriodicGrid(4 * math.pi, 32)
        assert g.k[1] == pytest.approx(0.5)
        w = g.wavenumbers()
        assert w.size == 32
        assert w[-1] == pytest.approx(0.5 * 16)

    def test_cutoff_is_two_thirds_rule(self):
        assert PeriodicGrid(TWO_PI, 96).cutoff == 32
        assert PeriodicGrid(TWO_PI, 256).cutoff == 85

    def test_nyquist_zeroed_for_odd_orders_only(self):
        g = PeriodicGrid(TWO_PI, 32)
        assert g.symbol(1)[g.nyquist] == 0
        assert g.symbol(3)[g.nyquist] == 0
        assert g.symbol(2)[g.nyquist] == -(16.0**2)

    @pytest.mark.parametrize("N", [15, 17, 8, 0])
    def test_rejects_bad_point_count(self, N):
        with pytest.raises(ValueError, match="even integer"):
            PeriodicGrid(TWO_PI, N)

    @pytest.mark.parametrize("M", [0.0, -1.0, math.inf])
    def test_rejects_bad_length(self, M):
        with pytest.raises(ValueError, match="positive"):
            PeriodicGrid(M, 32)

    def test_grid_is_immutable(self):
        g = PeriodicGrid(TWO_PI, 32)
        with pytest.raises(Exception):
            g.N = 64
        with pytest.raises(ValueError):
            g.x[0] = 1.0

    def test_antiderivative_of_cosine(self, grid64):
        F = grid64.antiderivative(np.cos(3 * grid64.x))
        np.testing.assert_allclose(F, np.sin(3 * grid64.x) / 3, atol=1e-14)

    def test_interpolation_reproduces_resolved_mode(self, grid64):
        xq = np.array([0.1234, 2.5, 6.0])
        vals = grid64.interpolate(np.sin(5 * grid64.x), xq)
        np.testing.assert_allclose(vals, np.sin(5 * xq), atol=1e-13)


class TestField:
    def test_rejects_non_finite_with_index(self, grid64):
        v = np.zeros(64)
        v[7] = np.nan
        with pytest.raises(NonFiniteError, match="index 7"):
            Field(grid64, v)

    def test_rejects_wrong_length(self, grid64):
        with pytest.raises(ValueError, match="expected 64 samples"):
            Field(grid64, np.zeros(10))

    def test_values_are_read_only(self, grid64):
        f = Field(grid64, np.ones(64))
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_trig_is_exactly_band_limited(self, grid64):
        f = Field.trig(grid64, sin={3: 1.0}, cos={7: 0.2}, const=0.5)
        nz = np.flatnonzero(f.hat != 0)
        assert set(nz) == {0, 3, 7}
        np.testing.assert_allclose(f.values, 0.5 + np.sin(3 * grid64.x) + 0.2 * np.cos(7 * grid64.x), atol=1e-14)

    def test_mode_rejects_nyquist(self, grid64):
        with pytest.raises(ValueError, match="mode index"):
            Field.mode(grid64, 32)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), scale=st.floats(1e-3, 1e3))
    def test_round_trip_within_ten_eps(self, seed, scale):
        g = PeriodicGrid(TWO_PI, 64)
        v = scale * np.random.default_rng(seed).standard_normal(64)
        back = g.ifft(g.fft(v))
        assert np.max(np.abs(back - v)) <= 10 * np.finfo(float).eps * np.max(np.abs(v)) * 4

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_parseval(self, seed):
        g = PeriodicGrid(3.0, 48)
        f = random_field(g, seed)
        quad = g.integrate(f.values**2)
        assert g.norm2_hat(f.hat) == pytest.approx(quad, rel=1e-12)


class TestSpectralDerivative:
    def test_first_derivative_of_sine(self):
        g = PeriodicGrid(5.0, 64)
        kk = TWO_PI / 5.0
        d = spectral_derivative(Field(g, np.sin(kk * g.x)), 1)
        np.testing.assert_allclose(d.values, kk * np.cos(kk * g.x), atol=1e-12)

    @pytest.mark.parametrize("order", [1, 2, 3, 5])
    def test_constant_has_zero_derivative(self, grid64, order):
        d = spectral_derivative(Field(grid64, np.full(64, 5.0)), order)
        assert np.max(np.abs(d.values)) <= 1e-13

    def test_third_derivative_of_cos3x(self, grid64):
        d = spectral_derivative(Field.mode(grid64, 3, "cos"), 3)
        np.testing.assert_allclose(d.values, 27 * np.sin(3 * grid64.x), atol=1e-12)

    def test_sampled_data_carries_amplified_roundoff(self, grid64):
        # transform noise in the top modes is multiplied by k^3
        d = spectral_derivative(Field(grid64, np.cos(3 * grid64.x)), 3)
        np.testing.assert_allclose(d.values, 27 * np.sin(3 * grid64.x), atol=1e-10)

    def test_nyquist_mode_has_zero_odd_derivative(self):
        g = PeriodicGrid(TWO_PI, 32)
        f = Field(g, np.cos(16 * g.x))
        assert np.max(np.abs(spectral_derivative(f, 1).values)) < 1e-12

    @pytest.mark.parametrize("order", [0, -1, 1.5])
    def test_rejects_bad_order(self, grid64, order):
        with pytest.raises(ValueError, match="positive integer"):
            spectral_derivative(Field(grid64, np.zeros(64)), order)

    def test_rejects_non_finite_input(self, grid64):
        with pytest.raises(NonFiniteError):
            spectral_derivative(Field(grid64, np.full(64, np.inf)), 1)


class TestSobolevEnergy:
    def test_zero_field(self, grid64):
        assert sobolev_energy(Field(grid64, np.zeros(64)), 3) == 0.0

    def test_sine_first_order(self, grid64):
        assert sobolev_energy(Field(grid64, np.sin(grid64.x)), 1) == pytest.approx(math.pi, rel=1e-14)

    def test_sin2x_second_order(self, grid64):
        e = sobolev_energy(Field(grid64, np.sin(2 * grid64.x)), 2)
        assert e == pytest.approx(0.5 * math.pi + 0.5 * 16 * math.pi, rel=1e-14)

    def test_order_zero_is_l2_squared(self, grid64):
        assert sobolev_energy(Field(grid64, np.sin(grid64.x)), 0) == pytest.approx(math.pi, rel=1e-14)

    def test_full_variant_sums_every_order(self, grid64):
        f = Field(grid64, np.sin(2 * grid64.x))
        expected = 0.5 * math.pi * (1 + 4 + 16)
        assert sobolev_energy(f, 2, full=True) == pytest.approx(expected, rel=1e-14)

    def test_rejects_negative_index(self, grid64):
        with pytest.raises(ValueError):
            sobolev_energy(Field(grid64, np.zeros(64)), -1)


class TestDealias:
    def test_resolved_field_unchanged(self, grid64):
        f = Field.trig(grid64, sin={1: 1.0, 21: 0.3})
        np.testing.assert_array_equal(dealias(f).hat, f.hat)

    def test_noise_has_no_energy_above_cutoff(self, grid64, rng):
        f = dealias(Field(grid64, rng.standard_normal(64)))
        assert np.all(f.hat[grid64.cutoff + 1 :] == 0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_idempotent(self, seed):
        g = PeriodicGrid(TWO_PI, 64)
        once = dealias(random_field(g, seed))
        np.testing.assert_array_equal(dealias(once).hat, once.hat)


class TestMollifier:
    def test_bump_profile_shape(self):
        s = np.array([0.0, 0.5, -0.5, 0.999, 1.0, 2.0])
        m = bump_profile(s)
        assert m[0] == 1.0
        assert m[1] == m[2]
        assert np.all((m >= 0) & (m <= 1))
        assert m[4] == 0.0 and m[5] == 0.0

    def test_rejects_non_positive_epsilon(self, grid64):
        with pytest.raises(ValueError, match="epsilon"):
            MollifierSpec(grid64, 0.0)

    def test_constant_is_preserved(self, grid64):
        spec = MollifierSpec(grid64, 0.3)
        out = mollify(Field(grid64, np.full(64, 2.5)), spec)
        np.testing.assert_allclose(out.values, 2.5, atol=1e-15)

    def test_total_cutoff_returns_mean(self, grid64, rng):
        f = Field(grid64, rng.standard_normal(64))
        out = mollify(f, MollifierSpec(grid64, 1.0))
        np.testing.assert_allclose(out.values, np.mean(f.values), atol=1e-15)

    def test_multiplier_tends_to_one(self, grid64):
        prev = None
        for eps in [0.1 / 2**j for j in range(8)]:
            m = MollifierSpec(grid64, eps).multiplier[5]
            assert prev is None or m >= prev
            prev = m
        assert prev == pytest.approx(1.0, abs=1e-4)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), eps=st.floats(1e-3, 2.0))
    def test_self_adjoint(self, seed, eps):
        g = PeriodicGrid(TWO_PI, 64)
        r = np.random.default_rng(seed)
        f, h = Field(g, r.standard_normal(64)), Field(g, r.standard_normal(64))
        spec = MollifierSpec(g, eps)
        # direct quadrature of both pairings
        lhs = g.inner(mollify(f, spec).values, h.values)
        rhs = g.inner(f.values, mollify(h, spec).values)
        assert abs(lhs - rhs) <= 1e-13

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), eps=st.floats(1e-3, 2.0), order=st.integers(1, 5))
    def test_commutes_with_derivative_exactly(self, seed, eps, order):
        g = PeriodicGrid(TWO_PI, 64)
        f = random_field(g, seed)
        spec = MollifierSpec(g, eps)
        m, sym = spec.multiplier, g.symbol(order)
        np.testing.assert_array_equal(m * sym, sym * m)
        a = spectral_derivative(mollify(f, spec), order).hat
        b = mollify(spectral_derivative(f, order), spec).hat
        # the two orders of three real products may differ in the last bit only
        assert np.all(np.abs(a - b) <= 2 * np.finfo(float).eps * np.abs(a))
