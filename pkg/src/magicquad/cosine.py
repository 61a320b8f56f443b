"""Fourier-cosine series benchmark pricer with cumulant-based domain truncation.

Used only for efficiency comparisons against the trained quadrature rule.
Supported models: bs, merton, heston (closed-form cumulants; the fourth
cumulant is taken as zero where no closed form is implemented).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBoundsError, InvalidParamsError
from .models import ModelParams, char_fn
from .payoffs import PayoffSpec


@dataclass(frozen=True)
class CosSettings:
    """Series length and truncation multiplier of the cosine pricer."""

    n_terms: int
    trunc_l: float

    def __post_init__(self):
        if self.n_terms < 1:
            raise InvalidParamsError("n_terms must be >= 1")
        if not self.trunc_l > 0:
            raise InvalidParamsError("truncation multiplier L must be positive")


def cumulants(model: ModelParams, maturity: float) -> tuple[float, float, float]:
    """First, second and fourth cumulant of the log-return at maturity.

    The fourth cumulant is 0 for bs (exact) and heston (no closed form
    implemented); merton uses the compound-Poisson closed form.
    """
    r = model.rate
    t = maturity
    if model.model == "bs":
        var = model.q[0]
        return ((r - 0.5 * var) * t, var * t, 0.0)
    if model.model == "merton":
        sigma, alpha, beta, lam = model.q
        drift = r - 0.5 * sigma**2 - lam * (math.exp(alpha + 0.5 * beta**2) - 1.0)
        c1 = t * (drift + lam * alpha)
        c2 = t * (sigma**2 + lam * (alpha**2 + beta**2))
        c4 = t * lam * (alpha**4 + 6.0 * alpha**2 * beta**2 + 3.0 * beta**4)
        return (c1, c2, c4)
    if model.model == "heston":
        v0, kappa, theta, sigma, rho = model.q
        ekt = math.exp(-kappa * t)
        c1 = r * t + (1.0 - ekt) * (theta - v0) / (2.0 * kappa) - 0.5 * theta * t
        c2 = (
            sigma * t * kappa * ekt * (v0 - theta) * (8.0 * kappa * rho - 4.0 * sigma)
            + kappa * rho * sigma * (1.0 - ekt) * (16.0 * theta - 8.0 * v0)
            + 2.0 * theta * kappa * t * (-4.0 * kappa * rho * sigma + sigma**2 + 4.0 * kappa**2)
            + sigma**2 * ((theta - 2.0 * v0) * math.exp(-2.0 * kappa * t) + theta * (6.0 * ekt - 7.0) + 2.0 * v0)
            + 8.0 * kappa**2 * (v0 - theta) * (1.0 - ekt)
        ) / (8.0 * kappa**3)
        return (c1, c2, 0.0)
    raise InvalidParamsError(f"cosine benchmark has no cumulants for model {model.model!r}")


def cos_range(model: ModelParams, maturity: float, settings: CosSettings) -> tuple[float, float]:
    """Truncated support [a, b] from the cumulant rule c1 -/+ L*sqrt(c2 + sqrt(c4))."""
    c1, c2, c4 = cumulants(model, maturity)
    if c2 < 0:
        raise InvalidParamsError("second cumulant must be nonnegative")
    width = settings.trunc_l * math.sqrt(c2 + math.sqrt(c4))
    return (c1 - width, c1 + width)


def _call_coefficients(n_terms: int, a: float, b: float, strike: float) -> np.ndarray:
    """Series coefficients of the call payoff on [a, b] (chi/psi closed forms)."""
    k = np.arange(n_terms)
    u = k * np.pi / (b - a)
    # chi_k(0, b): integral of exp(y)*cos(k*pi*(y-a)/(b-a)) over [0, b]
    arg_b = k * np.pi * (b - a) / (b - a)
    arg_0 = k * np.pi * (0.0 - a) / (b - a)
    chi = (np.cos(arg_b) * math.exp(b) - np.cos(arg_0) + u * (np.sin(arg_b) * math.exp(b) - np.sin(arg_0))) / (
        1.0 + u * u
    )
    # psi_k(0, b): integral of cos(k*pi*(y-a)/(b-a)) over [0, b]
    psi = np.empty(n_terms)
    psi[0] = b
    if n_terms > 1:
        psi[1:] = (np.sin(arg_b[1:]) - np.sin(arg_0[1:])) * (b - a) / (k[1:] * np.pi)
    return 2.0 / (b - a) * strike * (chi - psi)


def cos_series_terms(
    model: ModelParams,
    payoff: PayoffSpec,
    spot: float,
    maturity: float,
    settings: CosSettings,
) -> np.ndarray:
    """Individual series terms; the k = 0 term already carries its half weight.

    Partial sums of the returned array are the n-term prices, which is what
    the per-level comparison study consumes.
    """
    if payoff.kind != "call":
        raise InvalidParamsError("cosine benchmark is implemented for call payoffs")
    a, b = cos_range(model, maturity, settings)
    if not b > a:
        raise InvalidBoundsError("invalid cosine range: b must exceed a")
    x = math.log(spot / payoff.strike)
    k = np.arange(settings.n_terms)
    u = k * np.pi / (b - a)
    phi = np.asarray(char_fn(model, maturity, u + 0j))
    terms = np.real(phi * np.exp(1j * u * (x - a))) * _call_coefficients(
        settings.n_terms, a, b, payoff.strike
    )
    terms[0] *= 0.5
    return terms


def cos_price(
    model: ModelParams,
    payoff: PayoffSpec,
    spot: float,
    maturity: float,
    settings: CosSettings,
    discount: bool = False,
) -> float:
    """N-term cosine price of a call (undiscounted by default)."""
    value = float(cos_series_terms(model, payoff, spot, maturity, settings).sum())
    if discount:
        value *= math.exp(-model.rate * maturity)
    return value
