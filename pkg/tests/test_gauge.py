"""Linear gauge construction, certificate and the power gauges."""

import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvlab.coefficients import CoefficientSet, DegenerateDispersionError, TabulatedCoefficient
from kdvlab.gauge import (
    PowerGauge,
    PowerGaugeKind,
    build_gauge,
    norm_equivalence_constant,
    power_gauge_backward,
    power_gauge_forward,
    transform_coefficients,
    verify_gauge,
)
from kdvlab.spectral import Field, PeriodicGrid, sobolev_energy

TWO_PI = 2 * math.pi
CERT = CoefficientSet(a="2 + cos(x)", b="sin(x)")


def _closed_form_gauge(n):
    """g_n for a = 2 + cos x, b = sin x, where b/a = -(log a)' integrates in closed form."""
    x = sp.symbols("x", real=True)
    a = 2 + sp.cos(x)
    b = sp.sin(x)
    g = a ** (sp.Rational(1, 2) - sp.Rational(n, 3)) * sp.exp(sp.log(a / 3) / 3)
    # identity the construction must satisfy, checked symbolically: mean(b/a) = 0
    lhs = (sp.Rational(3, 2) - n) * sp.diff(a, x) - b - 3 * a * sp.diff(g, x) / g
    assert sp.simplify(lhs) == 0
    return sp.lambdify(x, g, "numpy"), sp.lambdify(x, sp.diff(g, x) / g, "numpy")


class TestBuildGauge:
    def test_constant_coefficients_give_constant_gauge(self, grid64):
        G = build_gauge(CoefficientSet(a="3", b="0"), grid64, 4)
        np.testing.assert_allclose(G.g.values, 3.0 ** (0.5 - 4 / 3), rtol=1e-15)

    @pytest.mark.parametrize("n", [0, 4, 7])
    def test_matches_closed_form(self, n):
        g_fn, _ = _closed_form_gauge(n)
        grid = PeriodicGrid(TWO_PI, 64)
        G = build_gauge(CERT, grid, n)
        np.testing.assert_allclose(G.g.values, g_fn(grid.x), rtol=1e-13)

    def test_k22_gauge_is_power_of_u(self, grid64):
        u = 2 + 0.5 * np.cos(grid64.x) + 0.2 * np.sin(3 * grid64.x)
        ux = grid64.diff(u, 1)
        cs = CoefficientSet(a=TabulatedCoefficient(2 * u), b=TabulatedCoefficient(6 * ux))
        n = 4
        G = build_gauge(cs, grid64, n)
        ratio = G.g.values / u ** (-0.5 - n / 3)
        assert np.ptp(ratio) / ratio.mean() <= 1e-12

    def test_negative_dispersion_uses_absolute_value(self, grid64):
        pos = build_gauge(CoefficientSet(a="2 + cos(x)", b="sin(x)"), grid64, 4)
        neg = build_gauge(CoefficientSet(a="-(2 + cos(x))", b="-sin(x)"), grid64, 4)
        np.testing.assert_allclose(neg.g.values, pos.g.values, rtol=1e-14)

    def test_degenerate_rejected(self, grid64):
        with pytest.raises(DegenerateDispersionError):
            build_gauge(CoefficientSet(a="cos(x)"), grid64, 4)

    def test_gauge_csv_columns(self, grid64):
        assert list(build_gauge(CERT, grid64, 4).table()) == ["x", "g", "b_tilde", "c_tilde", "d_tilde"]


class TestTransformCoefficients:
    def test_identity_gauge_is_exact_identity(self, grid64):
        cs = CoefficientSet(a="1", b="0", c="sin(x)", d="cos(2*x)", e="0.5")
        G = build_gauge(cs, grid64, 0)
        np.testing.assert_array_equal(G.g.values, 1.0)
        out = transform_coefficients(cs, G).sample(grid64)
        ref = cs.sample(grid64)
        for name in "bcde":
            np.testing.assert_array_equal(out[name], ref[name])

    def test_constant_gauge_keeps_b(self, grid64):
        cs = CoefficientSet(a="2", b="0.7")
        out = transform_coefficients(cs, build_gauge(cs, grid64, 4)).sample(grid64)
        np.testing.assert_array_equal(out["b"], 0.7)

    @pytest.mark.parametrize("n", [4, 5])
    def test_choice_identity_with_b_tilde(self, n):
        grid = PeriodicGrid(TWO_PI, 64)
        G = build_gauge(CERT, grid, n)
        bt = transform_coefficients(CERT, G).sample(grid)["b"]
        a = 2 + np.cos(grid.x)
        lhs = (1.5 - n) * grid.diff(a, 1) - bt
        assert np.max(np.abs(lhs + a * G.delta_bar)) <= 1e-9

    def test_transformed_coefficients_against_closed_form(self):
        n = 4
        g_fn, dlog = _closed_form_gauge(n)
        grid = PeriodicGrid(TWO_PI, 64)
        bt = transform_coefficients(CERT, build_gauge(CERT, grid, n)).sample(grid)["b"]
        x = grid.x
        np.testing.assert_allclose(bt, 3 * (2 + np.cos(x)) * dlog(x) + np.sin(x), atol=1e-12)


class TestVerifyGauge:
    def test_identity_case(self, grid64):
        r = verify_gauge(build_gauge(CoefficientSet(a="2", b="0"), grid64, 4), CoefficientSet(a="2", b="0"))
        assert r.residual == 0.0
        assert r.c4_max == 0.0 and r.c4_holds

    def test_certificate_case(self):
        grid = PeriodicGrid(TWO_PI, 128)
        r = verify_gauge(build_gauge(CERT, grid, 4), CERT)
        assert r.residual <= 1e-9
        assert r.periodicity_defect <= 1e-10
        assert r.c4_holds and r.consistent
        assert r.averaged_identity_error <= 1e-9

    def test_residual_against_fine_grid_oracle(self):
        # independent check at 4N points using the closed-form gauge
        n = 4
        _, dlog = _closed_form_gauge(n)
        fine = PeriodicGrid(TWO_PI, 256)
        coarse = build_gauge(CERT, PeriodicGrid(TWO_PI, 64), n)
        vals = coarse.grid.interpolate(np.log(coarse.g.values), fine.x)
        dl = fine.diff(vals, 1)
        assert np.max(np.abs(dl - dlog(fine.x))) <= 1e-9

    def test_illposed_case_flags_c4(self, grid64):
        cs = CoefficientSet(a="1", b="-1")
        r = verify_gauge(build_gauge(cs, grid64, 4), cs)
        assert not r.c4_holds and not r.c4_expected and r.consistent

    def test_bounds_reported(self, grid64):
        G = build_gauge(CERT, grid64, 4)
        r = verify_gauge(G, CERT)
        v = G.g.values
        assert 1 / r.k_g <= v.min() and v.max() <= r.k_g


@settings(max_examples=25, deadline=None)
@given(p=st.floats(-0.9, 0.9), q=st.floats(-2, 2), j=st.integers(1, 4), n=st.integers(0, 6))
def test_certificate_holds_for_smooth_positive_a(p, q, j, n):
    grid = PeriodicGrid(TWO_PI, 128)
    cs = CoefficientSet(a=f"2 + {p!r}*cos({j}*x)", b=f"{q!r} + sin(x)*cos(x)")
    r = verify_gauge(build_gauge(cs, grid, n), cs)
    assert r.residual <= 1e-9 * r.scale
    assert r.periodicity_defect <= 1e-10 * r.k_g
    assert r.consistent


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_norm_equivalence_two_sided(seed):
    grid = PeriodicGrid(TWO_PI, 64)
    n = 4
    G = build_gauge(CERT, grid, n)
    C = norm_equivalence_constant(G.g, n)
    r = np.random.default_rng(seed)
    v = Field.trig(grid, sin={j: r.normal() / j**3 for j in range(1, 15)}, cos={j: r.normal() / j**3 for j in range(1, 15)})
    gv = Field(grid, G.g.values * v.values)
    norm = lambda f: math.sqrt(2 * sobolev_energy(f, n))  # noqa: E731
    assert norm(gv) <= C * norm(v) * (1 + 1e-12)
    assert norm(v) <= C * norm(gv) * (1 + 1e-12)


class TestPowerGauge:
    def test_exponents(self):
        assert PowerGauge("K22", 4).beta_exact == Fraction(6, 17)
        assert PowerGauge("HARRY_DYM", 4).beta_exact == Fraction(2, 7)
        assert PowerGauge("K22", 0).beta_exact == Fraction(2, 3)

    @pytest.mark.parametrize("n", range(0, 12))
    def test_exponents_in_unit_interval(self, n):
        assert 0 < PowerGauge(PowerGaugeKind.K22, n).beta < 1
        if n >= 2:
            assert 0 < PowerGauge(PowerGaugeKind.HARRY_DYM, n).beta < 1

    def test_dym_needs_n_at_least_one(self):
        with pytest.raises(ValueError):
            PowerGauge("HARRY_DYM", 0)

    def test_fixed_point(self, grid64):
        w = power_gauge_forward(Field(grid64, np.ones(64)), PowerGauge("K22", 4))
        np.testing.assert_array_equal(w.values, 1.0)

    def test_n0_example(self, grid64):
        w = power_gauge_forward(Field(grid64, np.full(64, 4.0)), PowerGauge("K22", 0))
        np.testing.assert_allclose(w.values, 8.0, rtol=1e-15)

    def test_non_positive_rejected_with_location(self, grid64):
        u = np.ones(64)
        u[10] = 0.0
        with pytest.raises(ValueError, match="x = "):
            power_gauge_forward(Field(grid64, u), PowerGauge("K22", 4))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8), kind=st.sampled_from(["K22", "HARRY_DYM"]))
    def test_round_trip(self, seed, n, kind):
        grid = PeriodicGrid(TWO_PI, 32)
        u = np.exp(np.random.default_rng(seed).uniform(-2, 2, 32))
        pg = PowerGauge(kind, n)
        back = power_gauge_backward(power_gauge_forward(Field(grid, u), pg), pg)
        assert np.max(np.abs(back.values / u - 1)) <= 1e-12
