"""Linear evolution: right-hand side, integrators and the numerical probes."""

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvlab.coefficients import CoefficientSet
from kdvlab.integrators import IntegratorConfig, Scheme, auto_dt, step_count
from kdvlab.linear import (
    ProbeRefused,
    exact_propagator,
    gronwall_fit,
    integrate,
    reversibility_probe,
    rhs_linear,
    rhs_mollified,
    smooth_zone,
    smoothing_probe,
    time_to_overflow,
    wave_packet_experiment,
)
from kdvlab.spectral import Field, MollifierSpec, PeriodicGrid, sobolev_energy

TWO_PI = 2 * math.pi


def _sympy_rhs(a, b, c, d, e, u):
    x = sp.symbols("x", real=True)
    ex = {k: sp.sympify(v, locals={"x": x}) for k, v in dict(a=a, b=b, c=c, d=d, e=e, u=u).items()}
    U = ex["u"]
    r = ex["a"] * sp.diff(U, x, 3) + ex["b"] * sp.diff(U, x, 2) + ex["c"] * sp.diff(U, x) + ex["d"] * U + ex["e"]
    return sp.lambdify(x, r, "numpy")


class TestIntegratorConfig:
    def test_auto_dt_formula(self):
        assert auto_dt(10.0, 1.0, 0.0, 0.0, 0.0, 0.5) == pytest.approx(0.5 / 1001)

    def test_step_count_hits_end(self):
        n, h = step_count(0.1, 0.03)
        assert n == 4 and n * h == pytest.approx(0.1, abs=0)

    @pytest.mark.parametrize("kw", [{"dt": -1.0}, {"t_end": 0.0}, {"output_every": 0}, {"cfl_c": 0}, {"dt": "soon"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)

    def test_scheme_from_string(self):
        assert IntegratorConfig(scheme="rk4_explicit").scheme is Scheme.RK4_EXPLICIT


class TestRhsLinear:
    def test_against_symbolic_oracle(self, grid64):
        spec = dict(a="2 + cos(x)", b="sin(x)", c="cos(2*x)", d="0.5", e="0.25*sin(x)")
        u_expr = "sin(2*x) + 0.3*cos(5*x)"
        cs = CoefficientSet(**spec)
        u = Field.trig(grid64, sin={2: 1.0}, cos={5: 0.3})
        got = rhs_linear(u, cs).values
        want = _sympy_rhs(**spec, u=u_expr)(grid64.x)
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_airy_symbol(self, grid64):
        u = Field.mode(grid64, 3, "sin")
        # d^3/dx^3 sin 3x = -27 cos 3x
        np.testing.assert_allclose(rhs_linear(u, CoefficientSet(a="1")).values, -27 * np.cos(3 * grid64.x), atol=1e-12)

    def test_time_dependent_coefficient(self, grid64):
        u = Field.mode(grid64, 1, "cos")
        out = rhs_linear(u, CoefficientSet(a="0", d="t"), t=2.0).values
        np.testing.assert_allclose(out, 2.0 * np.cos(grid64.x), atol=1e-14)

    def test_mollified_converges_to_plain(self, grid64):
        cs = CoefficientSet(a="2 + cos(x)", b="sin(x)")
        u = Field.trig(grid64, sin={1: 1.0, 4: 0.5})
        plain = rhs_linear(u, cs).values
        errs = [np.max(np.abs(rhs_mollified(u, cs, MollifierSpec(grid64, eps)).values - plain)) for eps in (0.04, 0.02, 0.01, 0.005)]
        # the bump is 1 - O(s^2) near the origin, so the error is O(eps^2)
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates >= 1.9)

    def test_mollified_grid_mismatch(self, grid64, grid128):
        with pytest.raises(ValueError):
            rhs_mollified(Field.mode(grid64, 1), CoefficientSet(a="1"), MollifierSpec(grid128, 0.1))


class TestExactPropagator:
    def test_airy_travelling_sine(self, grid64):
        t = 0.3
        u = exact_propagator(Field.mode(grid64, 3, "sin"), 1.0, t=t)
        np.testing.assert_allclose(u.values, np.sin(3 * grid64.x - 27 * t), atol=1e-13)

    def test_diffusion_decay(self, grid64):
        u = exact_propagator(Field.mode(grid64, 2, "cos"), 0.0, b0=0.5, t=1.0)
        np.testing.assert_allclose(u.values, math.exp(-2.0) * np.cos(2 * grid64.x), atol=1e-14)

    @pytest.mark.parametrize("b0", [0.0, -0.25])
    def test_integrator_matches(self, b0):
        grid = PeriodicGrid(TWO_PI, 128)
        u0 = Field.trig(grid, sin={3: 1.0}, cos={7: 0.2})
        run = integrate(u0, CoefficientSet(a="1", b=repr(b0)), IntegratorConfig(t_end=0.1, dt=1e-4))
        ref = exact_propagator(u0, 1.0, b0, t=0.1)
        assert run.final.l2_norm() > 0
        assert Field(grid, run.final.values - ref.values).l2_norm() / ref.l2_norm() <= 1e-8


class TestIntegrate:
    def test_l2_conserved_for_constant_skew_operator(self, grid64):
        u0 = Field.trig(grid64, sin={1: 1.0, 5: 0.3}, cos={9: 0.1})
        run = integrate(u0, CoefficientSet(a="1.5", c="-0.7"), IntegratorConfig(t_end=1.0, dt=1e-3), n=0)
        E = np.asarray(run.trace.hn_energy)
        assert np.max(np.abs(E / E[0] - 1)) <= 1e-10

    @pytest.mark.parametrize("scheme", [Scheme.RK4_EXPLICIT, Scheme.RK4_IF])
    def test_fourth_order(self, scheme):
        grid = PeriodicGrid(TWO_PI, 32)
        cs = CoefficientSet(a="1", b="sin(x)")
        u0 = Field.trig(grid, sin={1: 1.0}, cos={2: 0.5})
        T = 0.05

        def final(dt):
            return integrate(u0, cs, IntegratorConfig(scheme=scheme, t_end=T, dt=dt), keep_fields=False).final.values

        # the integrating factor removes the dispersive error, so it reaches round-off sooner
        m = 25 if scheme is Scheme.RK4_IF else 100
        ref = final(T / 3200)
        e1 = np.max(np.abs(final(T / m) - ref))
        e2 = np.max(np.abs(final(T / (2 * m)) - ref))
        assert math.log2(e1 / e2) >= 3.8

    def test_gauged_matches_plain(self, grid64):
        cs = CoefficientSet(a="2 + cos(x)", b="sin(x)")
        u0 = Field.trig(grid64, sin={1: 1.0}, cos={3: 0.2})
        cfg = IntegratorConfig(t_end=0.05, dt=2e-5)
        plain = integrate(u0, cs, cfg, keep_fields=False).final
        gauged = integrate(u0, cs, cfg, gauge=True, keep_fields=False).final
        assert Field(grid64, plain.values - gauged.values).l2_norm() / plain.l2_norm() <= 1e-6

    def test_backward_diffusion_growth(self, grid64):
        # b = -0.5 amplifies mode 8 by exp(0.5 * 64 t)
        u0 = Field.mode(grid64, 8, "sin")
        run = integrate(u0, CoefficientSet(a="1", b="-0.5"), IntegratorConfig(t_end=0.05, dt=1e-5), n=0)
        ratio = math.sqrt(run.trace.hn_energy[-1] / run.trace.hn_energy[0])
        assert ratio == pytest.approx(math.exp(0.5 * 64 * 0.05), rel=1e-6)

    def test_blowup_flag_and_overflow_time(self, grid64):
        run = integrate(Field.mode(grid64, 16), CoefficientSet(a="1", b="-1"), IntegratorConfig(t_end=1.0))
        assert run.blowup and run.trace.status == "BLOWUP"
        # energy grows like exp(2*256 t): the threshold 1e12 is crossed near t = log(1e12)/512
        assert time_to_overflow(run) == pytest.approx(math.log(1e12) / 512, rel=0.05)

    def test_overflow_time_decreases_with_wavenumber(self, grid64):
        cs = CoefficientSet(a="1", b="-1")
        times = [time_to_overflow(integrate(Field.mode(grid64, k), cs, IntegratorConfig(t_end=2.0), keep_fields=False)) for k in (4, 8, 16)]
        assert times[0] > times[1] > times[2]

    def test_no_overflow_is_infinite(self, grid64):
        run = integrate(Field.mode(grid64, 2), CoefficientSet(a="1"), IntegratorConfig(t_end=0.01))
        assert time_to_overflow(run) == math.inf

    def test_keep_fields_false_keeps_endpoints(self, grid64):
        run = integrate(Field.mode(grid64, 2), CoefficientSet(a="1"), IntegratorConfig(t_end=0.01, dt=1e-3), keep_fields=False)
        assert len(run.fields) == 1 and run.times[-1] == pytest.approx(0.01)

    def test_trace_columns(self, grid64):
        run = integrate(Field.mode(grid64, 2), CoefficientSet(a="1", b="0.1"), IntegratorConfig(t_end=0.01), track_gauged_energy=True)
        cols = run.trace.columns()
        assert {"t", "hn_energy", "delta_bar", "gauged_energy"} <= set(cols)
        assert np.allclose(cols["delta_bar"], 0.1)


class TestGronwall:
    def test_conservative_problem_has_zero_constant(self, grid64):
        run = integrate(Field.mode(grid64, 3), CoefficientSet(a="1"), IntegratorConfig(t_end=0.1))
        assert gronwall_fit(run.trace).K <= 1e-10

    def test_smoothing_problem_has_zero_constant(self, grid64):
        run = integrate(Field.mode(grid64, 3), CoefficientSet(a="1", b="0.3"), IntegratorConfig(t_end=0.1))
        fit = gronwall_fit(run.trace)
        assert fit.K == 0.0 and np.all(fit.slack >= 0)

    def test_growth_rate_recovered(self, grid64):
        # H^0 energy grows like exp(2 * 0.1 * 9 t) for mode 3 and b = -0.1
        run = integrate(Field.mode(grid64, 3), CoefficientSet(a="1", b="-0.1"), IntegratorConfig(t_end=0.5, dt=1e-4), n=0)
        fit = gronwall_fit(run.trace, "hn")
        assert fit.K <= 1.8 * (1 + 1e-6)
        assert np.all(fit.slack >= -1e-9 * np.max(run.trace.hn_energy))

    def test_blowup_refused(self, grid64):
        run = integrate(Field.mode(grid64, 16), CoefficientSet(a="1", b="-1"), IntegratorConfig(t_end=1.0))
        with pytest.raises(ProbeRefused):
            gronwall_fit(run.trace)
        assert gronwall_fit(run.trace, allow_blowup=True).caveat

    def test_envelope(self):
        from kdvlab.linear import GronwallFit

        fit = GronwallFit(2.0, np.zeros(1), "hn")
        assert fit.envelope(0.5, 1.0) == pytest.approx(2 * math.e - 1)


class TestSmoothing:
    def test_matches_per_mode_closed_form(self):
        grid = PeriodicGrid(TWO_PI, 128)
        b, n, T = 0.5, 4, 0.1
        u0 = Field.trig(grid, sin={3: 1.0}, cos={7: 0.2})
        cs = CoefficientSet(a="1", b=repr(b))
        run = integrate(u0, cs, IntegratorConfig(t_end=T, dt=1e-4, output_every=1), n=n)
        rep = smoothing_probe(run, n, cs)
        modes = {3: 1.0, 7: 0.2}
        integral = sum(0.5 * math.pi * A**2 * (1 + k ** (2 * n + 2)) * (1 - math.exp(-2 * b * k**2 * T)) / (2 * b * k**2) for k, A in modes.items())
        e0 = sum(0.5 * math.pi * A**2 * (1 + k ** (2 * n)) for k, A in modes.items())
        assert rep.initial_energy == pytest.approx(e0, rel=1e-12)
        assert rep.ratio == pytest.approx(integral / e0, rel=0.01)

    def test_doubling_diffusion_halves_high_mode_integral(self):
        grid = PeriodicGrid(TWO_PI, 64)
        u0 = Field.mode(grid, 12)
        vals = []
        for b in (0.5, 1.0):
            cs = CoefficientSet(a="1", b=repr(b))
            run = integrate(u0, cs, IntegratorConfig(t_end=1.0, dt=2e-4, output_every=1), n=4)
            vals.append(smoothing_probe(run, 4, cs).integral)
        # mode 12 is fully damped by t = 1, so the integral is 1/(2 b k^2) times the energy
        assert vals[0] / vals[1] == pytest.approx(2.0, rel=0.01)

    def test_high_third_decays_after_transient(self):
        # per step the band energy oscillates (dispersion moves energy across the band edge
        # and b < 0 on part of the circle), so the decay is checked on window averages
        grid = PeriodicGrid(TWO_PI, 64)
        r = np.random.default_rng(3)
        kc = grid.N // 3
        u0 = Field.trig(grid, sin={j: r.normal() for j in range(1, kc + 1)}, cos={j: r.normal() for j in range(1, kc + 1)})
        run = integrate(u0, CoefficientSet(a="1", b="0.1 + sin(x)"), IntegratorConfig(t_end=0.5, output_every=1))
        hi = np.arange(grid.N // 2 + 1) > 2 * kc // 3
        energy = np.array([np.sum(np.abs(u.hat[hi]) ** 2) for u in run.fields])
        t = np.asarray(run.times)
        edges = np.arange(0.05, 0.5001, 0.05)
        means = np.array([energy[(t >= lo) & (t < hi_)].mean() for lo, hi_ in zip(edges[:-1], edges[1:])])
        assert np.all(np.diff(means) < 0)
        assert means[-1] < 1e-6 * energy[0]

    def test_refused_for_non_smoothing(self, grid64):
        cs = CoefficientSet(a="1")
        run = integrate(Field.mode(grid64, 3), cs, IntegratorConfig(t_end=0.01))
        with pytest.raises(ProbeRefused):
            smoothing_probe(run, 4, cs)

    def test_refinement_change(self):
        from kdvlab.linear import SmoothingReport

        assert SmoothingReport(1.0, 1.0, 2.0, 2.1).refinement_change == pytest.approx(0.05)
        assert SmoothingReport(1.0, 1.0, 2.0).refinement_change is None


class TestReversibility:
    def test_airy_round_trip(self, grid64):
        u0 = Field.trig(grid64, sin={1: 1.0, 4: 0.3}, cos={6: 0.1})
        rep = reversibility_probe(u0, CoefficientSet(a="1"), 0.1, IntegratorConfig(dt=1e-4))
        assert rep.error_l2 <= 1e-8

    def test_variable_reversible_round_trip(self, grid64):
        u0 = Field.trig(grid64, sin={1: 1.0}, cos={2: 0.3})
        rep = reversibility_probe(u0, CoefficientSet(a="1", b="sin(x)"), 0.02, IntegratorConfig(dt=2e-5), n_norm=2)
        assert rep.error_l2 <= 1e-6 and rep.error_hn <= 1e-5

    @pytest.mark.parametrize("b", ["0.5", "-0.5", "0.1 + sin(x)"])
    def test_refused_when_not_reversible(self, grid64, b):
        with pytest.raises(ProbeRefused, match="REVERSIBLE"):
            reversibility_probe(Field.mode(grid64, 1), CoefficientSet(a="1", b=b), 0.05)


class TestWavePacket:
    def test_smooth_zone_integral(self):
        x = np.linspace(-20, 40, 60001)
        prof = smooth_zone(x, 5.0, 3.0, 0.5)
        assert np.trapezoid(prof, x) == pytest.approx(3.0, rel=1e-9)

    def test_no_anti_diffusion_no_amplification(self):
        rep = wave_packet_experiment(1.0, 0.0, 3.0, 16.0)
        assert rep.predicted_amplification == 1.0
        assert rep.amplification == pytest.approx(1.0, rel=0.02)
        assert not rep.inconclusive

    def test_needs_dispersion(self):
        with pytest.raises(ValueError):
            wave_packet_experiment(0.0, 1.0, 3.0, 16.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a0=st.floats(0.5, 2.0), c0=st.floats(-1, 1))
def test_exact_propagator_preserves_l2_without_diffusion(seed, a0, c0):
    grid = PeriodicGrid(TWO_PI, 32)
    r = np.random.default_rng(seed)
    u0 = Field.trig(grid, sin={j: r.normal() for j in range(1, 8)}, cos={j: r.normal() for j in range(1, 8)})
    u = exact_propagator(u0, a0, 0.0, c0, 0.0, t=r.uniform(0, 5))
    assert u.l2_norm() == pytest.approx(u0.l2_norm(), rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(b=st.floats(0.05, 1.0), k=st.integers(1, 6))
def test_smoothing_energy_monotone(b, k):
    grid = PeriodicGrid(TWO_PI, 32)
    run = integrate(Field.mode(grid, k), CoefficientSet(a="1", b=repr(b)), IntegratorConfig(t_end=0.05))
    E = np.asarray(run.trace.hn_energy)
    assert np.all(np.diff(E) <= 1e-12 * E[0])


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_solution_map_lipschitz_on_sampled_pairs(seed):
    # gauged energy does not grow, so the H^n growth is bounded by the squared norm-equivalence constant
    from kdvlab.gauge import build_gauge, norm_equivalence_constant

    grid = PeriodicGrid(TWO_PI, 64)
    cs = CoefficientSet(a="1", b="0.1 + sin(x)")
    n = 4
    C = norm_equivalence_constant(build_gauge(cs, grid, n).g, n)
    r = np.random.default_rng(seed)

    def sample():
        return Field.trig(grid, sin={j: r.normal() / j**4 for j in range(1, 12)}, cos={j: r.normal() / j**4 for j in range(1, 12)})

    u, v = sample(), sample()
    cfg = IntegratorConfig(t_end=0.05)
    du = Field(grid, integrate(u, cs, cfg, keep_fields=False).final.values - integrate(v, cs, cfg, keep_fields=False).final.values)
    d0 = Field(grid, u.values - v.values)
    assert math.sqrt(sobolev_energy(du, n) / sobolev_energy(d0, n)) <= C**2
