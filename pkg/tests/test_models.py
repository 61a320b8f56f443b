"""Characteristic functions, parameter boxes, damping selection, implied variance."""

import numpy as np
import pytest
from scipy.stats import norminvgauss

from magicquad.errors import InfeasibleEtaError, InvalidParamsError, StripViolationError
from magicquad.models import (
    ModelParams,
    ParamBox,
    char_fn,
    covariance_matrix,
    implied_variance,
    select_eta,
    validate_box,
)
from magicquad.payoffs import PayoffSpec


def random_params(model: str, rng) -> ModelParams:
    """Valid random draws per model, roughly matching the experiment boxes."""
    if model == "bs":
        return ModelParams("bs", (rng.uniform(0.1, 0.9) ** 2,), rate=rng.uniform(0, 0.1))
    if model == "merton":
        q = (rng.uniform(0.1, 0.7), rng.uniform(-1.5, -0.1), rng.uniform(0.1, 1.0), rng.uniform(0.01, 1.0))
        return ModelParams("merton", q, rate=rng.uniform(0, 0.1))
    if model == "cgmy":
        q = (rng.uniform(0.01, 1.0), rng.uniform(1.0, 25.0), rng.uniform(2.1, 30.0), 1.1)
        return ModelParams("cgmy", q, rate=rng.uniform(0, 0.1))
    if model == "nig":
        alpha = rng.uniform(2.2, 3.0)
        beta = rng.uniform(-1.0 + 1e-3, alpha - 2.1)
        return ModelParams("nig", (rng.uniform(0.2, 1.0), alpha, beta), rate=rng.uniform(0, 0.1))
    q = (rng.uniform(0.04, 0.09), 2.0, rng.uniform(0.0225, 0.1225), 0.15, rng.uniform(-1, 1))
    return ModelParams("heston", q, rate=rng.uniform(0, 0.1))


MODELS = ["bs", "merton", "cgmy", "nig", "heston"]


class TestCharFn:
    @pytest.mark.parametrize("model", MODELS)
    def test_normalization_at_zero(self, model):
        rng = np.random.default_rng(5)
        for _ in range(100):
            p = random_params(model, rng)
            t = rng.uniform(0.1, 1.5)
            assert abs(char_fn(p, t, 0.0) - 1.0) <= 1e-14

    @pytest.mark.parametrize("model", MODELS)
    def test_martingale_identity(self, model):
        rng = np.random.default_rng(6)
        for _ in range(100):
            p = random_params(model, rng)
            t = rng.uniform(0.1, 1.5)
            assert abs(char_fn(p, t, -1j) - np.exp(p.rate * t)) <= 1e-12

    def test_bs_closed_form_value(self):
        got = char_fn(ModelParams("bs", (0.04,), 0.0), 1.0, 1.0)
        assert got == pytest.approx(np.exp(-0.02j - 0.02), rel=1e-15)

    def test_bs_against_monte_carlo(self):
        # Independent sampling of the log-return distribution.
        rng = np.random.default_rng(99)
        var, t = 0.04, 1.0
        b = -0.5 * var
        draws = b * t + np.sqrt(var * t) * rng.standard_normal(4_000_000)
        mc = np.exp(1j * draws).mean()
        assert char_fn(ModelParams("bs", (var,), 0.0), t, 1.0) == pytest.approx(mc, abs=1e-3)

    @pytest.mark.parametrize("model", MODELS)
    def test_conjugate_symmetry(self, model):
        rng = np.random.default_rng(21)
        p = random_params(model, rng)
        xi = np.linspace(0.0, 65.0, 40)
        eta = -1.5
        left = char_fn(p, 0.9, -xi + 1j * eta)
        right = np.conjugate(char_fn(p, 0.9, xi + 1j * eta))
        assert np.allclose(left, right, rtol=1e-13, atol=1e-300)

    @pytest.mark.parametrize("model", ["bs", "merton"])
    def test_tail_decay_monotone(self, model):
        rng = np.random.default_rng(23)
        p = random_params(model, rng)
        xi = np.linspace(30.0, 65.0, 100)
        mags = np.abs(char_fn(p, 1.0, xi - 1.5j))
        assert np.all(np.diff(mags) <= 0)

    def test_strip_violation(self):
        cgmy = ModelParams("cgmy", (0.5, 5.0, 3.0, 1.1), 0.0)
        with pytest.raises(StripViolationError):
            char_fn(cgmy, 1.0, 0.0 - 4.0j)
        nig = ModelParams("nig", (0.5, 3.0, 0.0), 0.0)
        with pytest.raises(StripViolationError):
            char_fn(nig, 1.0, 0.0 + 3.5j)

    def test_multivariate_bs(self):
        cov = (0.04, 0.015, 0.0625)
        p = ModelParams("bs", cov, 0.02)
        sig = covariance_matrix(cov)
        assert sig[0, 1] == sig[1, 0] == 0.015
        # Martingale per coordinate.
        for j in range(2):
            z = np.zeros(2, dtype=complex)
            z[j] = -1j
            assert char_fn(p, 1.3, z) == pytest.approx(np.exp(0.02 * 1.3), rel=1e-13)
        assert char_fn(p, 1.3, np.zeros(2)) == pytest.approx(1.0, rel=1e-15)


class TestParamValidation:
    def test_rejects_bad_params(self):
        with pytest.raises(InvalidParamsError):
            ModelParams("bs", (-0.1,))
        with pytest.raises(InvalidParamsError):
            ModelParams("bs", (0.04, 0.05, 0.04))  # not positive definite
        with pytest.raises(InvalidParamsError):
            ModelParams("merton", (0.0, 0.1, 0.1, 0.5))
        with pytest.raises(InvalidParamsError):
            ModelParams("cgmy", (0.5, 5.0, 0.5, 1.1))  # M < 1
        with pytest.raises(InvalidParamsError):
            ModelParams("cgmy", (0.5, 5.0, 5.0, 2.3))  # Y outside (1,2)
        with pytest.raises(InvalidParamsError):
            ModelParams("nig", (0.5, 1.0, 2.0))  # alpha^2 <= beta^2
        with pytest.raises(InvalidParamsError):
            ModelParams("heston", (0.04, 2.0, 0.04, 0.9, 0.0))  # Feller violated
        with pytest.raises(InvalidParamsError):
            ModelParams("heston", (0.04, 2.0, 0.04, 0.15, -1.5))

    def test_rate_nonnegative(self):
        with pytest.raises(InvalidParamsError):
            ModelParams("bs", (0.04,), rate=-0.01)


class TestValidateBox:
    def test_cgmy_strip_ok(self):
        box = ParamBox(
            model="cgmy",
            s0k=(0.5, 2.0),
            maturity=(0.1, 1.5),
            params={"C": (1e-5, 1.0), "G": (0.0, 25.0), "M": (2.0, 30.0)},
        )
        assert "M + 2R > 1" not in validate_box(box)

    def test_nig_corner_violation_reported(self):
        box = ParamBox(
            model="nig",
            s0k=(0.5, 2.0),
            maturity=(0.1, 1.5),
            params={"alpha": (1e-5, 3.0), "beta": (-3.0, 3.0), "delta": (0.2, 1.0)},
        )
        violations = validate_box(box)
        assert "alpha - beta > 2R + 1" in violations

    def test_heston_feller_ok(self):
        box = ParamBox(
            model="heston",
            s0k=(0.5, 2.0),
            maturity=(0.1, 1.5),
            params={"v0": (0.04, 0.09), "theta": (0.0225, 0.1225), "rho": (-1.0, 1.0)},
        )
        assert not [v for v in validate_box(box) if "Feller" in v]

    def test_feller_violation_reported(self):
        box = ParamBox(
            model="heston",
            s0k=(0.5, 2.0),
            maturity=(0.1, 1.5),
            params={"v0": (0.04, 0.09), "theta": (0.001, 0.002), "rho": (-1.0, 1.0)},
        )
        assert [v for v in validate_box(box) if "Feller" in v]


class TestSelectEta:
    def test_cgmy_strip_centered(self):
        box = ParamBox(
            model="cgmy",
            s0k=(0.5, 2.0),
            maturity=(0.1, 1.5),
            params={"C": (1e-5, 1.0), "G": (0.0, 25.0), "M": (2.0, 30.0)},
            strip_width=0.5,
        )
        assert select_eta(box, PayoffSpec("call", 1.0)) == pytest.approx(-1.5)

    def test_nig_strip_centered(self):
        # Narrow box whose unconstrained max(beta - alpha) = -4.
        box = ParamBox(
            model="nig",
            s0k=(0.5, 2.0),
            maturity=(0.1, 1.5),
            params={"alpha": (5.0, 6.0), "beta": (0.0, 1.0), "delta": (0.2, 1.0)},
            strip_width=0.5,
        )
        assert select_eta(box, PayoffSpec("call", 1.0)) == pytest.approx(-2.5)

    def test_default_for_entire_models(self):
        box = ParamBox(model="bs", s0k=(0.5, 2.0), maturity=(0.1, 1.5), params={"sigma": (0.1, 0.9)})
        assert select_eta(box, PayoffSpec("call", 1.0)) == pytest.approx(-1.5)

    def test_infeasible_default(self):
        box = ParamBox(model="bs", s0k=(0.5, 2.0), maturity=(0.1, 1.5), params={"sigma": (0.1, 0.9)})
        with pytest.raises(InfeasibleEtaError):
            select_eta(box, PayoffSpec("put", 1.0))  # default -1.5 not admissible


class TestImpliedVariance:
    def test_nig_value(self):
        # Oracle: variance of scipy's NIG distribution (a=alpha*delta,
        # b=beta*delta, scale=delta).
        oracle = norminvgauss(a=2.0, b=0.0, scale=1.0).var()
        assert oracle == pytest.approx(0.5, rel=1e-12)
        assert implied_variance(ModelParams("nig", (1.0, 2.0, 0.0))) == pytest.approx(0.5, rel=1e-14)

    def test_nig_random_draws_against_scipy(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            p = random_params("nig", rng)
            delta, alpha, beta = p.q
            oracle = norminvgauss(a=alpha * delta, b=beta * delta, scale=delta).var()
            assert implied_variance(p) == pytest.approx(oracle, rel=1e-10)

    def test_cgmy_value(self):
        from scipy.special import gamma

        expected = gamma(0.5) * 2.0 / np.sqrt(10.0)
        assert expected == pytest.approx(1.1209982, abs=1e-6)
        got = implied_variance(ModelParams("cgmy", (1.0, 10.0, 10.0, 1.5)))
        assert got == pytest.approx(expected, rel=1e-14)

    def test_bs_value(self):
        assert implied_variance(ModelParams("bs", (0.2**2,))) == pytest.approx(0.04, rel=1e-15)

    def test_merton_second_moment(self):
        # Oracle: Monte Carlo variance of the jump-diffusion increment
        # without drift (drift does not change the variance).
        rng = np.random.default_rng(17)
        sigma, alpha, beta, lam = 0.3, -0.5, 0.4, 0.6
        n = 2_000_000
        jumps = rng.poisson(lam, size=n)
        x = sigma * rng.standard_normal(n) + alpha * jumps + beta * np.sqrt(jumps) * rng.standard_normal(n)
        got = implied_variance(ModelParams("merton", (sigma, alpha, beta, lam)))
        assert got == pytest.approx(x.var(), rel=2e-2)

    def test_heston_proxy(self):
        assert implied_variance(ModelParams("heston", (0.06, 2.0, 0.05, 0.15, 0.0))) == 0.06
