"""Option prices from Fourier integrals: reference quadrature, online rule, tail estimate.

Prices are undiscounted expectations of the payoff by default (the discount
flag multiplies by exp(-r*T)).  The integrand of a parameter point bundles
the damped payoff transform, the spot factor exp(i*z*log(S0)) and the
model's characteristic function; the half-line symmetry of real payoffs
turns the full-line inversion into ``2/(2*pi)^d`` times the integral of the
real part over frequencies with nonnegative first coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import models as _models
from . import payoffs as _payoffs
from .eim import MagicRule, online_integrate
from .errors import InvalidBoundsError, InvalidParamsError, SpecMismatchError
from .models import ModelParams
from .payoffs import PayoffSpec
from .quadrature import (
    FreqGrid,
    QuadSettings,
    TensorGrid,
    integrate_adaptive,
    integrate_adaptive_2d,
)

_CHUNK_ROWS = 256


@dataclass(frozen=True)
class ParamPoint:
    """One parameter constellation: spot, strike, maturity and model parameters."""

    spot: float | tuple[float, ...]
    strike: float
    maturity: float
    q: tuple[float, ...]

    def __post_init__(self):
        spot = self.spot
        if isinstance(spot, (list, np.ndarray)):
            spot = tuple(float(v) for v in spot)
            object.__setattr__(self, "spot", spot)
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        spots = spot if isinstance(spot, tuple) else (spot,)
        if any(s <= 0 for s in spots):
            raise InvalidParamsError("spot must be positive")
        if self.strike <= 0 or self.maturity <= 0:
            raise InvalidParamsError("strike and maturity must be positive")


def prefactor(dim: int) -> float:
    """Constant in front of the half-line integral: 2/(2*pi)^d."""
    return 2.0 / (2.0 * math.pi) ** dim


@dataclass(frozen=True)
class IntegrandSpec:
    """Closed-form evaluator family for the real pricing integrand.

    ``h(p, xi)`` evaluates, for the parameter point ``p``, the real part of
    payoff_ft(-xi + i*eta) * exp(i*(xi + i*eta)*log S0) * char_fn(xi + i*eta)
    vectorized over the frequency array ``xi`` (trailing coordinate axis for
    multivariate payoffs).
    """

    payoff: PayoffSpec
    model: str
    eta: float | tuple[float, ...]
    rate: float = 0.0
    dim: int = 1

    def __post_init__(self):
        if self.model not in _models.MODELS:
            raise InvalidParamsError(f"unknown model {self.model!r}")
        if self.dim != self.payoff.dim:
            raise InvalidParamsError("payoff dimension disagrees with integrand dimension")
        if self.dim > 1 and self.model != "bs":
            raise InvalidParamsError("multivariate integrands are implemented for bs only")
        eta = self.eta
        if self.dim > 1:
            eta = tuple(float(e) for e in np.atleast_1d(np.asarray(eta, dtype=float)))
            object.__setattr__(self, "eta", eta)
            _payoffs.check_eta(self.payoff, eta)
        else:
            object.__setattr__(self, "eta", float(eta))
            _payoffs.check_eta(self.payoff, float(eta))
        if self.rate < 0:
            raise InvalidParamsError("risk-free rate must be >= 0")

    def h(self, p: ParamPoint, xi) -> np.ndarray:
        """Real pricing integrand of point ``p`` at frequencies ``xi``."""
        if self.dim == 1:
            xi = np.asarray(xi, dtype=float)
            z = xi + 1j * self.eta
            s = -1j * xi + self.eta
            _models._check_strip_arrays(self.model, p.q, self.eta)
            cf = _models._cf_arrays(self.model, p.q, self.rate, p.maturity, z)
            ft = _payoffs._ft_single(self.payoff.kind, math.log(p.strike), s)
            spot_factor = np.exp(1j * z * math.log(p.spot))
            return np.real(ft * spot_factor * cf)
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        z = xi + 1j * eta
        s = -1j * xi + eta
        cov = _models.covariance_matrix(p.q)
        cf = _models._cf_bs_multi(cov, self.rate, p.maturity, z)
        ft = _payoffs._ft_basket_min(math.log(p.strike), s)
        x0 = np.log(np.asarray(p.spot, dtype=float))
        spot_factor = np.exp(1j * (z @ x0))
        return np.real(ft * spot_factor * cf)

    def h_matrix(self, points: list[ParamPoint], grid: FreqGrid | TensorGrid) -> np.ndarray:
        """Snapshot matrix: every point evaluated on every grid node (row blocks)."""
        if self.dim == 1:
            nodes = grid.nodes
            z = (nodes + 1j * self.eta)[None, :]
            s = (-1j * nodes + self.eta)[None, :]
            out = np.empty((len(points), nodes.size))
            for start in range(0, len(points), _CHUNK_ROWS):
                block = points[start : start + _CHUNK_ROWS]
                col = lambda vals: np.asarray(vals, dtype=float)[:, None]
                spot = col([p.spot for p in block])
                lnk = np.log(col([p.strike for p in block]))
                mat_t = col([p.maturity for p in block])
                q_cols = tuple(col([p.q[k] for p in block]) for k in range(len(block[0].q)))
                _models._check_strip_arrays(self.model, q_cols, self.eta)
                cf = _models._cf_arrays(self.model, q_cols, self.rate, mat_t, z)
                ft = _payoffs._ft_single(self.payoff.kind, lnk, s)
                out[start : start + len(block)] = np.real(ft * np.exp(1j * z * np.log(spot)) * cf)
            return out
        pts = grid.points()
        out = np.empty((len(points), pts.shape[0]))
        for i, p in enumerate(points):
            out[i] = self.h(p, pts)
        return out


@dataclass(frozen=True)
class PriceRequest:
    """One pricing task: payoff, model, spot, maturity, damping and domain."""

    payoff: PayoffSpec
    model: ModelParams
    spot: float | tuple[float, ...]
    maturity: float
    eta: float | tuple[float, ...]
    omega: tuple = (0.0, 65.0)
    discount: bool = False

    def __post_init__(self):
        if isinstance(self.spot, (list, np.ndarray)):
            object.__setattr__(self, "spot", tuple(float(v) for v in self.spot))
        if self.maturity <= 0:
            raise InvalidParamsError("maturity must be positive")
        _payoffs.check_eta(self.payoff, self.eta)
        if self.payoff.dim == 1:
            _models._check_strip_arrays(self.model.model, self.model.q, float(self.eta))

    @property
    def dim(self) -> int:
        return self.payoff.dim

    def point(self) -> ParamPoint:
        return ParamPoint(
            spot=self.spot, strike=self.payoff.strike, maturity=self.maturity, q=self.model.q
        )

    def spec(self) -> IntegrandSpec:
        return IntegrandSpec(
            payoff=self.payoff,
            model=self.model.model,
            eta=self.eta,
            rate=self.model.rate,
            dim=self.dim,
        )


def _discount(req: PriceRequest) -> float:
    return math.exp(-req.model.rate * req.maturity) if req.discount else 1.0


def price_reference(req: PriceRequest, settings: QuadSettings | None = None) -> float:
    """Price by adaptive quadrature of the closed-form integrand over the domain."""
    spec = req.spec()
    point = req.point()
    if req.dim == 1:
        lo, hi = req.omega
        value = integrate_adaptive(lambda xi: spec.h(point, xi), lo, hi, settings)
    elif req.dim == 2:
        (lo1, hi1), (lo2, hi2) = req.omega

        def f2(x, ys):
            pts = np.stack([np.full_like(ys, x), ys], axis=-1)
            return spec.h(point, pts)

        value = integrate_adaptive_2d(f2, (lo1, hi1), (lo2, hi2), settings)
    else:
        raise InvalidParamsError("reference pricing is implemented for dim 1 and 2")
    return prefactor(req.dim) * value * _discount(req)


def price_magic(rule: MagicRule, req: PriceRequest) -> float:
    """Price from a trained rule: M closed-form evaluations and a weighted sum."""
    _check_rule_matches(rule, req)
    value = online_integrate(rule, req.point())
    return prefactor(req.dim) * value * _discount(req)


def _check_rule_matches(rule: MagicRule, req: PriceRequest) -> None:
    if rule.payoff_id != req.payoff.kind:
        raise SpecMismatchError(f"rule payoff {rule.payoff_id!r} != request payoff {req.payoff.kind!r}")
    if rule.model_id != req.model.model:
        raise SpecMismatchError(f"rule model {rule.model_id!r} != request model {req.model.model!r}")
    if rule.dim != req.dim:
        raise SpecMismatchError("rule and request dimensions differ")
    if not np.allclose(np.atleast_1d(rule.eta), np.atleast_1d(req.eta), rtol=0, atol=0):
        raise SpecMismatchError(f"rule eta {rule.eta} != request eta {req.eta}")
    if rule.rate != req.model.rate:
        raise SpecMismatchError("rule and request risk-free rates differ")
    if rule.dim == 1:
        if (rule.omega_lo, rule.omega_hi) != tuple(req.omega):
            raise SpecMismatchError("rule and request integration domains differ")
        if rule.strike != req.payoff.strike:
            raise SpecMismatchError("rule was trained at a different strike")
    else:
        dom = tuple((l, h) for l, h in zip(rule.omega_lo, rule.omega_hi))
        if dom != tuple(tuple(b) for b in req.omega):
            raise SpecMismatchError("rule and request integration domains differ")


def truncation_tail(
    req: PriceRequest, omega_hi: float, far: float, settings: QuadSettings | None = None
) -> float:
    """Magnitude of the price mass in the frequency band [omega_hi, far].

    A computable surrogate for the truncation error committed by cutting the
    integration domain at ``omega_hi``; draws with a large tail must be
    excluded from fixed-domain comparisons.
    """
    if far == omega_hi:
        return 0.0
    if far < omega_hi:
        raise InvalidBoundsError("far bound must not undercut the domain bound")
    if req.dim != 1:
        raise InvalidParamsError("tail estimation is implemented for dim 1")
    spec = req.spec()
    point = req.point()
    value = integrate_adaptive(lambda xi: spec.h(point, xi), omega_hi, far, settings)
    return abs(prefactor(1) * value) * _discount(req)
