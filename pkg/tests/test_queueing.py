import math

import numpy as np
import pytest
from scipy import integrate, stats

from ridectl.errors import InvalidInputError
from ridectl.profile import from_rides, zero
from ridectl.queueing import (
    DemandRate,
    ServiceDistribution,
    TargetSpec,
    averaged_bound,
    bound_at,
    compute_target,
    poisson_tail,
    predict_active,
    rho,
)

WINDOW = (0.0, 20.0)


def make_spec(rate=1.0, service=None, delta=0.05, carryover=(), bookahead=(), window=WINDOW) -> TargetSpec:
    return TargetSpec(
        delta,
        window,
        DemandRate.constant(rate),
        service or ServiceDistribution.exponential(1 / 12),
        from_rides(carryover, window),
        from_rides(bookahead, window),
    )


class TestServiceDistribution:
    def test_empirical(self):
        g = ServiceDistribution.empirical([3.0, 1.0, 2.0])
        assert g.mean == pytest.approx(2.0)
        assert g.cdf(2.0) == pytest.approx(2 / 3)
        assert g.integrated_survival(1.5) == pytest.approx(4 / 3)
        assert g.integrated_survival(0.0) == 0.0
        assert g.integrated_survival(-1.0) == 0.0
        assert g.integrated_survival(10.0) == pytest.approx(2.0)

    def test_exponential_matches_quadrature(self):
        g = ServiceDistribution.exponential(0.25)
        for u in (0.5, 3.0, 17.0):
            expected, _ = integrate.quad(lambda y: 1.0 - float(g.cdf(y)), 0.0, u)
            assert g.integrated_survival(u) == pytest.approx(expected, rel=1e-9)

    def test_deterministic(self):
        g = ServiceDistribution.deterministic(4.0)
        assert g.integrated_survival(np.array([1.0, 4.0, 9.0])).tolist() == [1.0, 4.0, 4.0]
        assert g.cdf(3.999) == 0.0
        assert g.cdf(4.0) == 1.0

    def test_sample_stays_in_support(self):
        g = ServiceDistribution.empirical([5.0, 7.0])
        draws = g.sample(np.random.default_rng(0), 50)
        assert set(draws.tolist()) <= {5.0, 7.0}

    @pytest.mark.parametrize(
        "build",
        [
            lambda: ServiceDistribution.empirical([]),
            lambda: ServiceDistribution.empirical([0.0, 2.0]),
            lambda: ServiceDistribution.exponential(0.0),
            lambda: ServiceDistribution.deterministic(-1.0),
        ],
    )
    def test_invalid(self, build):
        with pytest.raises(InvalidInputError):
            build()


class TestRho:
    def test_constant_exponential(self):
        demand = DemandRate.constant(2.0)
        g = ServiceDistribution.exponential(0.5)
        for t in (0.0, 1.0, 6.0, 40.0):
            assert rho(10.0 + t, 10.0, demand, g) == pytest.approx(4.0 * (1.0 - math.exp(-0.5 * t)))

    def test_piecewise_deterministic(self):
        demand = DemandRate.piecewise([(0.0, 1.0), (5.0, 3.0)])
        g = ServiceDistribution.deterministic(4.0)
        # rides still running at 7 started in (3, 7]: 2 min at rate 1 and 2 min at rate 3
        assert rho(7.0, 0.0, demand, g) == pytest.approx(8.0)

    def test_piecewise_matches_quadrature(self):
        demand = DemandRate.piecewise([(0.0, 0.5), (6.0, 2.0), (11.0, 0.0), (15.0, 1.0)])
        g = ServiceDistribution.exponential(0.2)
        for t in (3.0, 9.0, 14.0, 19.0):
            expected, _ = integrate.quad(
                lambda s: demand.rate_at(s) * (1.0 - float(g.cdf(t - s))),
                0.0,
                t,
                points=[p for p in (6.0, 11.0, 15.0) if p < t] or None,
                limit=200,
            )
            assert rho(t, 0.0, demand, g) == pytest.approx(expected, rel=1e-7)

    def test_array_input(self):
        demand = DemandRate.constant(1.0)
        g = ServiceDistribution.deterministic(5.0)
        assert rho(np.array([0.0, 2.0, 8.0]), 0.0, demand, g).tolist() == [0.0, 2.0, 5.0]

    def test_before_window_start(self):
        with pytest.raises(InvalidInputError):
            rho(-1.0, 0.0, DemandRate.constant(1.0), ServiceDistribution.deterministic(5.0))


class TestPoissonTail:
    @pytest.mark.parametrize("mean", [0.1, 1.0, 5.0, 20.0, 49.0, 51.0, 200.0])
    @pytest.mark.parametrize("threshold", [1, 2, 5, 10, 30, 100, 300])
    def test_matches_scipy(self, mean, threshold):
        expected = stats.poisson.sf(threshold - 1, mean)
        assert poisson_tail(mean, threshold) == pytest.approx(expected, rel=1e-6, abs=1e-300)

    @pytest.mark.parametrize("mean", [0.1, 1.0, 5.0, 20.0, 50.0])
    def test_matches_pmf_sum(self, mean):
        pmf = [math.exp(-mean + k * math.log(mean) - math.lgamma(k + 1)) for k in range(700)]
        for threshold in range(151):
            expected = math.fsum(pmf[threshold:])
            assert abs(poisson_tail(mean, threshold) - expected) <= 1e-12

    @pytest.mark.parametrize("threshold", [150, 180, 200, 230, 260])
    def test_large_mean_relative_accuracy(self, threshold):
        expected = stats.poisson.sf(threshold - 1, 200.0)
        assert poisson_tail(200.0, threshold) == pytest.approx(expected, rel=1e-9)

    def test_edges(self):
        assert poisson_tail(0.0, 1) == 0.0
        assert poisson_tail(0.0, 0) == 1.0
        assert poisson_tail(3.0, 0) == 1.0
        assert poisson_tail(3.0, -2) == 1.0
        with pytest.raises(InvalidInputError):
            poisson_tail(-1.0, 2)

    def test_monotone(self):
        tails = [poisson_tail(8.0, k) for k in range(40)]
        assert all(a >= b for a, b in zip(tails, tails[1:]))
        by_mean = [poisson_tail(m, 10) for m in np.linspace(0.5, 80.0, 60)]
        assert all(a <= b for a, b in zip(by_mean, by_mean[1:]))


class TestBound:
    def test_bound_at_without_reservations(self):
        spec = make_spec(rate=2.0, service=ServiceDistribution.deterministic(5.0))
        # ρ is 10 once a full ride length has passed
        assert bound_at(15.0, 14, spec) == pytest.approx(stats.poisson.sf(13, 10.0), rel=1e-9)

    def test_bound_at_outside_window(self):
        with pytest.raises(InvalidInputError):
            bound_at(25.0, 3, make_spec())

    def test_averaged_matches_quadrature(self):
        spec = make_spec(rate=1.0)
        expected, _ = integrate.quad(lambda t: bound_at(t, 5, spec), 0.0, 20.0, limit=200)
        assert averaged_bound(5, spec) == pytest.approx(expected / 20.0, rel=1e-5)

    def test_averaged_with_reservations_matches_quadrature(self):
        spec = make_spec(
            rate=0.4,
            service=ServiceDistribution.deterministic(30.0),
            carryover=[(-5.0, 8.0), (-2.0, 14.0)],
            bookahead=[(6.0, 30.0)],
        )
        for c in (3, 5, 8):
            expected, _ = integrate.quad(lambda t: bound_at(t, c, spec), 0.0, 20.0, points=[6.0, 8.0, 14.0], limit=200)
            assert averaged_bound(c, spec) == pytest.approx(expected / 20.0, rel=1e-5, abs=1e-12)


class TestComputeTarget:
    @pytest.mark.parametrize("rate", [0.2, 1.0, 4.0])
    @pytest.mark.parametrize("delta", [0.01, 0.1])
    def test_smallest_feasible(self, rate, delta):
        spec = make_spec(rate=rate, delta=delta, carryover=[(-3.0, 9.0)], bookahead=[(12.0, 18.0)])
        c = compute_target(spec)
        assert averaged_bound(c, spec) <= delta
        assert c == 0 or averaged_bound(c - 1, spec) > delta

    def test_monotone_in_delta_and_rate(self):
        strict = compute_target(make_spec(rate=1.0, delta=0.01))
        loose = compute_target(make_spec(rate=1.0, delta=0.2))
        busier = compute_target(make_spec(rate=3.0, delta=0.01))
        assert strict >= loose
        assert busier >= strict

    def test_zero_demand_needs_nothing(self):
        assert compute_target(make_spec(rate=0.0)) == 0

    def test_zero_demand_still_covers_reserved_rides(self):
        # three rides busy until 5 leave no slack on a quarter of the window
        spec = make_spec(rate=0.0, carryover=[(-1.0, 5.0)] * 3)
        c = compute_target(spec)
        assert c == 4
        assert averaged_bound(c, spec) <= spec.delta
        assert averaged_bound(c - 1, spec) == pytest.approx(0.25)

    def test_heavy_demand(self):
        spec = make_spec(rate=100.0)
        c = compute_target(spec)
        assert averaged_bound(c, spec) <= spec.delta
        assert averaged_bound(c - 1, spec) > spec.delta


class TestSpec:
    def test_invalid_delta(self):
        with pytest.raises(InvalidInputError):
            make_spec(delta=1.0)

    def test_profile_window_mismatch(self):
        with pytest.raises(InvalidInputError):
            TargetSpec(
                0.05,
                WINDOW,
                DemandRate.constant(1.0),
                ServiceDistribution.deterministic(5.0),
                zero((0.0, 10.0)),
                zero(WINDOW),
            )

    def test_predict_active(self):
        spec = make_spec(rate=2.0, service=ServiceDistribution.deterministic(5.0), carryover=[(-1.0, 3.0)])
        mean, std = predict_active(spec, [1.0, 10.0])
        assert mean.tolist() == pytest.approx([1.0 + 2.0, 10.0])
        assert std.tolist() == pytest.approx([math.sqrt(2.0), math.sqrt(10.0)])
