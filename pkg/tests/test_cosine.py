"""Cosine-series benchmark pricer: cumulants, range rule and convergence."""

import numpy as np
import pytest
from scipy.stats import kstat

from magicquad.cosine import CosSettings, cos_price, cos_range, cumulants
from magicquad.errors import InvalidParamsError
from magicquad.models import ModelParams
from magicquad.payoffs import PayoffSpec
from magicquad.pricing import PriceRequest, price_reference
from magicquad.quadrature import QuadSettings

TIGHT = QuadSettings(abs_tol=1e-14, rel_tol=1e-12, max_intervals=200_000)
BS_ATM_CALL = 0.07965567455405798  # undiscounted Black-Scholes value, vol 0.2, T 1


class TestCumulants:
    def test_bs_values(self):
        c1, c2, c4 = cumulants(ModelParams("bs", (0.04,), 0.0), 1.0)
        assert c1 == pytest.approx(-0.02, rel=1e-15)
        assert c2 == pytest.approx(0.04, rel=1e-15)
        assert c4 == 0.0

    def test_bs_range(self):
        a, b = cos_range(ModelParams("bs", (0.04,), 0.0), 1.0, CosSettings(64, 14.0))
        assert a == pytest.approx(-0.02 - 14 * 0.2, rel=1e-14)
        assert b == pytest.approx(-0.02 + 14 * 0.2, rel=1e-14)

    def test_merton_against_monte_carlo_kstats(self):
        # Oracle: unbiased k-statistics of simulated jump-diffusion returns.
        sigma, alpha, beta, lam, t = 0.3, -0.5, 0.3, 0.5, 1.0
        model = ModelParams("merton", (sigma, alpha, beta, lam), 0.0)
        c1, c2, c4 = cumulants(model, t)
        rng = np.random.default_rng(12345)
        n = 2_000_000
        jumps = rng.poisson(lam * t, size=n)
        drift = -0.5 * sigma**2 - lam * (np.exp(alpha + 0.5 * beta**2) - 1.0)
        x = (
            drift * t
            + sigma * np.sqrt(t) * rng.standard_normal(n)
            + alpha * jumps
            + beta * np.sqrt(jumps) * rng.standard_normal(n)
        )
        assert c1 == pytest.approx(x.mean(), abs=1e-3)
        assert c2 == pytest.approx(kstat(x, 2), abs=1e-2)
        assert c4 == pytest.approx(kstat(x, 4), abs=1e-2)

    def test_heston_second_cumulant_against_numeric_log_cf(self):
        # Oracle: finite differences of the log characteristic function.
        from magicquad.models import char_fn

        model = ModelParams("heston", (0.0775, 2.0, 0.1009, 0.15, -0.8273), 0.0)
        t = 1.443
        h = 1e-3
        lp = lambda u: np.log(char_fn(model, t, complex(u, 0.0)))
        numeric_c2 = -np.real(lp(h) - 2 * lp(0.0) + lp(-h)) / h**2
        c1, c2, _ = cumulants(model, t)
        assert c2 == pytest.approx(numeric_c2, abs=1e-4)
        numeric_c1 = np.imag(lp(h) - lp(-h)) / (2 * h)
        assert c1 == pytest.approx(numeric_c1, abs=1e-6)

    def test_unsupported_model(self):
        with pytest.raises(InvalidParamsError):
            cumulants(ModelParams("nig", (0.5, 3.0, 0.0), 0.0), 1.0)


class TestCosPrice:
    def test_bs_atm_call(self):
        got = cos_price(ModelParams("bs", (0.04,), 0.0), PayoffSpec("call", 1.0), 1.0, 1.0, CosSettings(256, 14.0))
        assert got == pytest.approx(BS_ATM_CALL, abs=1e-10)

    def test_merton_against_reference(self):
        model = ModelParams("merton", (0.3, -0.5, 0.4, 0.5), 0.0)
        ref = price_reference(
            PriceRequest(PayoffSpec("call", 1.0), model, 1.2, 0.8, eta=-1.5), TIGHT
        )
        got = cos_price(model, PayoffSpec("call", 1.0), 1.2, 0.8, CosSettings(512, 8.0))
        assert got == pytest.approx(ref, abs=1e-8)

    def test_convergence_in_n(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            vol = rng.uniform(0.15, 0.7)
            spot = rng.uniform(0.6, 1.8)
            maturity = rng.uniform(0.25, 1.5)
            model = ModelParams("bs", (vol**2,), 0.0)
            ref = price_reference(
                PriceRequest(PayoffSpec("call", 1.0), model, spot, maturity, eta=-1.5), TIGHT
            )
            errs = [
                abs(cos_price(model, PayoffSpec("call", 1.0), spot, maturity, CosSettings(n, 14.0)) - ref)
                for n in (8, 16, 32, 64, 128, 256, 512)
            ]
            # Nonincreasing up to floating noise.
            for a, b in zip(errs, errs[1:]):
                assert b <= a + 1e-12

    def test_put_not_supported(self):
        with pytest.raises(InvalidParamsError):
            cos_price(ModelParams("bs", (0.04,), 0.0), PayoffSpec("put", 1.0), 1.0, 1.0, CosSettings(64, 14.0))

    def test_settings_validation(self):
        with pytest.raises(InvalidParamsError):
            CosSettings(0, 14.0)
        with pytest.raises(InvalidParamsError):
            CosSettings(64, 0.0)

    def test_discounting(self):
        model = ModelParams("bs", (0.04,), 0.03)
        undisc = cos_price(model, PayoffSpec("call", 1.0), 1.0, 2.0, CosSettings(256, 14.0))
        disc = cos_price(model, PayoffSpec("call", 1.0), 1.0, 2.0, CosSettings(256, 14.0), discount=True)
        assert disc == pytest.approx(np.exp(-0.06) * undisc, rel=1e-13)
