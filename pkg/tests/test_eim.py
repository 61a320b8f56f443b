"""Greedy training, interpolation operator, online weights and persistence."""

import numpy as np
import pytest

from magicquad import eim
from magicquad.errors import (
    DegenerateSetError,
    DimensionMismatchError,
    MalformedFileError,
    VersionMismatchError,
)
from magicquad.payoffs import PayoffSpec
from magicquad.pricing import IntegrandSpec, ParamPoint
from magicquad.quadrature import QuadSettings, integrate_adaptive, make_uniform_grid

TIGHT = QuadSettings(abs_tol=1e-14, rel_tol=1e-12, max_intervals=200_000)


class TrigSpec:
    """Synthetic integrand family a*cos(xi) + b*sin(xi), identified by (a, b) in q."""

    model = "synthetic-trig"
    rate = 0.0

    def h(self, p, xi):
        a, b = p.q
        return a * np.cos(xi) + b * np.sin(xi)


def trig_training_set(coeffs, lo=0.0, hi=np.pi, count=500):
    spec = TrigSpec()
    grid = make_uniform_grid(lo, hi, count, 0.0)
    cloud = [ParamPoint(spot=1.0, strike=1.0, maturity=1.0, q=(a, b)) for a, b in coeffs]
    values = np.array([spec.h(p, grid.nodes) for p in cloud])
    return eim.TrainingSet(cloud=cloud, grid=grid, values=values, spec=spec)


@pytest.fixture(scope="module")
def bs_rule():
    """Small Black-Scholes training run used by the property tests."""
    rng = np.random.default_rng(2024)
    spec = IntegrandSpec(PayoffSpec("call", 1.0), "bs", eta=-1.5, rate=0.0)
    cloud = [
        ParamPoint(
            spot=rng.uniform(0.5, 2.0),
            strike=1.0,
            maturity=rng.uniform(0.1, 1.5),
            q=(rng.uniform(0.1, 0.9) ** 2,),
        )
        for _ in range(300)
    ]
    grid = make_uniform_grid(0.0, 65.0, 500, -1.5)
    ts = eim.TrainingSet(cloud=cloud, grid=grid, values=spec.h_matrix(cloud, grid), spec=spec)
    rule = eim.train(ts, tol=1e-10, m_max=50)
    eim.compute_weights(rule, spec, TIGHT)
    return ts, rule


class TestTrain:
    def test_single_integrand(self):
        ts = trig_training_set([(1.0, 0.5)])
        rule = eim.train(ts, tol=1e-12, m_max=10)
        assert rule.m == 1
        # One-element set is its own span: the interpolant reproduces it.
        row = ts.values[0]
        recon = eim.interpolate(rule, row[rule.node_indices])
        assert np.abs(recon - row).max() <= 1e-14
        assert rule.final_residual <= 1e-12

    def test_two_dimensional_family_exact_at_two(self):
        ts = trig_training_set([(1.0, 0.0), (0.3, 0.7), (-0.5, 1.1), (2.0, -0.4)])
        rule = eim.train(ts, tol=1e-13, m_max=10)
        assert rule.m == 2
        assert rule.final_residual <= 1e-13

    def test_degenerate_all_zero_rejected(self):
        spec = TrigSpec()
        grid = make_uniform_grid(0.0, np.pi, 50, 0.0)
        cloud = [ParamPoint(spot=1.0, strike=1.0, maturity=1.0, q=(0.0, 0.0))]
        with pytest.raises(DegenerateSetError):
            eim.TrainingSet(cloud=cloud, grid=grid, values=np.zeros((1, 50)), spec=spec)

    def test_history_positive_decreasing_trend(self, bs_rule):
        _, rule = bs_rule
        hist = rule.residual_history
        assert np.all(hist > 0)
        # Greedy sup-norm selection never increases between consecutive steps.
        assert np.all(np.diff(np.log10(hist)) <= 1e-12)

    def test_exponential_decay_on_bs_family(self, bs_rule):
        _, rule = bs_rule
        assert rule.m <= 50
        assert rule.final_residual <= 1e-10


class TestInterpolate:
    def test_reproduces_basis_rows(self, bs_rule):
        _, rule = bs_rule
        for k in [0, rule.m // 2, rule.m - 1]:
            unit = rule.basis[k, rule.node_indices]
            got = eim.interpolate(rule, unit)
            assert np.abs(got - rule.basis[k]).max() <= 1e-12

    def test_snapshot_exactness_at_magic_points(self, bs_rule):
        ts, rule = bs_rule
        for idx in rule.magic_param_indices:
            row = ts.values[idx]
            recon = eim.interpolate(rule, row[rule.node_indices])
            assert np.abs(recon[rule.node_indices] - row[rule.node_indices]).max() <= 1e-12

    def test_single_point_rule_projection(self):
        ts = trig_training_set([(1.0, 0.5)])
        rule = eim.train(ts, tol=1e-12, m_max=10)
        spec = TrigSpec()
        other = ParamPoint(spot=1.0, strike=1.0, maturity=1.0, q=(0.0, 1.0))
        u = spec.h(other, rule.magic_points)
        got = eim.interpolate(rule, np.atleast_1d(u))
        want = u * rule.basis[0]
        assert np.abs(got - want).max() <= 1e-14

    def test_dimension_mismatch(self, bs_rule):
        _, rule = bs_rule
        with pytest.raises(DimensionMismatchError):
            eim.interpolate(rule, np.zeros(rule.m + 1))


class TestComputeWeights:
    def test_constant_family(self):
        class ConstSpec:
            model = "synthetic-const"
            rate = 0.0

            def h(self, p, xi):
                return np.full_like(np.asarray(xi, dtype=float), p.q[0])

        spec = ConstSpec()
        grid = make_uniform_grid(0.0, 1.0, 50, 0.0)
        cloud = [ParamPoint(spot=1.0, strike=1.0, maturity=1.0, q=(3.0,))]
        values = np.array([spec.h(p, grid.nodes) for p in cloud])
        ts = eim.TrainingSet(cloud=cloud, grid=grid, values=values, spec=spec)
        rule = eim.train(ts, tol=1e-13, m_max=5)
        weights = eim.compute_weights(rule, spec, TIGHT)
        assert rule.m == 1
        assert np.allclose(rule.basis[0], 1.0)
        assert weights[0] == pytest.approx(1.0, abs=1e-14)
        other = ParamPoint(spot=1.0, strike=1.0, maturity=1.0, q=(-2.5,))
        with pytest.warns(eim.ExtrapolationWarning):  # outside the one-point cloud
            assert eim.online_integrate(rule, other) == pytest.approx(-2.5, abs=1e-13)

    def test_trig_family_closed_form_integrals(self):
        # On [0, pi]: integral of cos = 0, integral of sin = 2.
        ts = trig_training_set([(1.0, 0.0), (0.3, 0.7), (-0.5, 1.1)])
        rule = eim.train(ts, tol=1e-13, m_max=10)
        eim.compute_weights(rule, ts.spec, TIGHT)
        rng = np.random.default_rng(3)
        for _ in range(5):
            a = rng.uniform(-0.5, 1.0)
            b = rng.uniform(0.0, 1.1)
            p = ParamPoint(spot=1.0, strike=1.0, maturity=1.0, q=(a, b))
            assert eim.online_integrate(rule, p) == pytest.approx(2.0 * b, abs=1e-12)

    def test_bs_snapshot_integrals_match_reference(self, bs_rule):
        ts, rule = bs_rule
        spec = ts.spec
        for k, p in enumerate(rule.magic_params):
            online = eim.online_integrate(rule, p)
            reference = integrate_adaptive(
                lambda xi: spec.h(p, xi), rule.omega_lo, rule.omega_hi, TIGHT
            )
            assert abs(online - reference) <= 1e-10

    def test_level_weights_match_prefix_rule(self, bs_rule):
        ts, rule = bs_rule
        # Retrain with a smaller budget: the greedy process is incremental,
        # so the truncated rule's weights must match weights_at_level.
        m_small = rule.m // 2
        small = eim.train(ts, tol=1e-30, m_max=m_small)
        eim.compute_weights(small, ts.spec, TIGHT)
        lvl = rule.weights_at_level(m_small)
        assert np.allclose(small.weights, lvl, rtol=1e-9, atol=1e-13)


class TestOnlineIntegrate:
    def test_extrapolation_flagged(self, bs_rule):
        _, rule = bs_rule
        outside = ParamPoint(spot=5.0, strike=1.0, maturity=1.0, q=(0.04,))
        with pytest.warns(eim.ExtrapolationWarning):
            eim.online_integrate(rule, outside)

    def test_in_cloud_error_bounded_by_residual_transport(self, bs_rule):
        ts, rule = bs_rule
        spec = ts.spec
        length = rule.omega_hi - rule.omega_lo
        rng = np.random.default_rng(8)
        for idx in rng.choice(len(ts.cloud), size=10, replace=False):
            p = ts.cloud[int(idx)]
            online = eim.online_integrate(rule, p)
            reference = integrate_adaptive(lambda xi: spec.h(p, xi), rule.omega_lo, rule.omega_hi, TIGHT)
            assert abs(online - reference) <= rule.final_residual * length + 1e-10


class TestPersistence:
    def test_round_trip_bit_exact(self, bs_rule):
        _, rule = bs_rule
        blob = eim.save_rule(rule)
        back = eim.load_rule(blob)
        assert back.m == rule.m
        for field in ["magic_points", "basis", "b_inverse", "snapshot_coeffs", "weights",
                      "residual_history", "snapshot_integrals"]:
            a, b = getattr(rule, field), getattr(back, field)
            assert np.array_equal(a, b), field
        assert back.magic_params == rule.magic_params
        assert back.eta == rule.eta
        assert (back.omega_lo, back.omega_hi) == (rule.omega_lo, rule.omega_hi)
        assert back.final_residual == rule.final_residual
        assert back.model_id == rule.model_id and back.payoff_id == rule.payoff_id
        # Round-tripping again yields identical bytes.
        assert eim.save_rule(back) == blob

    def test_truncated_file(self, bs_rule):
        _, rule = bs_rule
        blob = eim.save_rule(rule)
        with pytest.raises(MalformedFileError):
            eim.load_rule(blob[: len(blob) // 2])

    def test_version_mismatch(self, bs_rule):
        import json

        _, rule = bs_rule
        doc = json.loads(eim.save_rule(rule))
        doc["format_version"] = 999
        with pytest.raises(VersionMismatchError):
            eim.load_rule(json.dumps(doc))

    def test_loaded_rule_prices(self, bs_rule):
        ts, rule = bs_rule
        back = eim.load_rule(eim.save_rule(rule))
        p = ts.cloud[5]
        assert eim.online_integrate(back, p) == pytest.approx(
            eim.online_integrate(rule, p), rel=1e-15
        )


class TestAlgebraicProperties:
    """Structural identities of the interpolation operator on a trained rule."""

    def test_exactness_at_magic_points(self, bs_rule):
        ts, rule = bs_rule
        cols = rule.node_indices
        for row in ts.values[::7]:
            recon = eim.interpolate(rule, row[cols])
            assert np.abs(recon[cols] - row[cols]).max() <= 1e-12

    def test_collocation_matrix_unit_lower_triangular(self, bs_rule):
        _, rule = bs_rule
        b = rule.b_matrix()
        assert np.array_equal(np.diag(b), np.ones(rule.m))
        assert np.abs(np.triu(b, 1)).max() <= 1e-12

    def test_basis_bounded_with_max_at_own_node(self, bs_rule):
        _, rule = bs_rule
        for k in range(rule.m):
            assert np.abs(rule.basis[k]).max() == 1.0
            assert rule.basis[k, rule.node_indices[k]] == 1.0

    def test_linearity(self, bs_rule):
        ts, rule = bs_rule
        cols = rule.node_indices
        rng = np.random.default_rng(4)
        for _ in range(10):
            i, j = rng.choice(len(ts.cloud), size=2, replace=False)
            a_, b_ = rng.normal(size=2)
            combo = eim.interpolate(rule, a_ * ts.values[i][cols] + b_ * ts.values[j][cols])
            parts = a_ * eim.interpolate(rule, ts.values[i][cols]) + b_ * eim.interpolate(
                rule, ts.values[j][cols]
            )
            assert np.abs(combo - parts).max() <= 1e-12

    def test_idempotence(self, bs_rule):
        ts, rule = bs_rule
        cols = rule.node_indices
        for row in ts.values[::17]:
            once = eim.interpolate(rule, row[cols])
            twice = eim.interpolate(rule, once[cols])
            assert np.abs(twice - once).max() <= 1e-12

    def test_monotone_coverage(self, bs_rule):
        ts, rule = bs_rule
        cols = rule.node_indices
        worst = 0.0
        for row in ts.values:
            resid = row - eim.interpolate(rule, row[cols])
            worst = max(worst, np.abs(resid).max())
        assert worst <= rule.residual_history[-1] * (1 + 1e-9)

    def test_coefficient_stability_bound(self, bs_rule):
        ts, rule = bs_rule
        cols = rule.node_indices
        bound = 2.0 ** np.arange(rule.m)
        for row in ts.values[::5]:
            scale = np.abs(row).max()
            coeffs = eim.interpolation_coefficients(rule, row[cols])
            assert np.all(np.abs(coeffs) <= bound * scale * (1 + 1e-12))
