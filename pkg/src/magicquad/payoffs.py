"""Generalized Fourier transforms of payoff profiles and admissible damping.

All transforms follow one argument convention: for an input ``z`` the real
part is the oscillation frequency and the imaginary part is the damping
weight ``eta``, i.e. the transform equals

    integral of exp(i*Re(z)*x) * exp(Im(z)*x) * payoff(x) dx

over the log-asset variable x.  Each payoff kind admits damping only on an
open interval; poles of the closed forms sit on that interval's boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleEtaError, InvalidParamsError, PoleError

KINDS = ("call", "put", "digital_down_out", "asset_or_nothing_down_out", "basket_min_call")

_POLE_TOL = 1e-12

# Pole locations of each closed form as a function of the damping weight.
_POLES = {
    "call": (0.0, -1.0),
    "put": (0.0, -1.0),
    "digital_down_out": (0.0,),
    "asset_or_nothing_down_out": (-1.0,),
    "basket_min_call": (0.0,),
}


@dataclass(frozen=True)
class PayoffSpec:
    """Payoff profile: kind, strike and (for baskets) asset count."""

    kind: str
    strike: float
    dim: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParamsError(f"unknown payoff kind {self.kind!r}")
        if not self.strike > 0:
            raise InvalidParamsError(f"strike must be positive, got {self.strike}")
        if self.kind != "basket_min_call" and self.dim != 1:
            raise InvalidParamsError(f"{self.kind} is a single-asset payoff (dim must be 1)")
        if self.dim < 1:
            raise InvalidParamsError("dim must be a positive integer")


@dataclass(frozen=True)
class EtaRange:
    """Open interval of admissible damping weights, per coordinate."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InvalidParamsError("empty damping range")

    def contains(self, eta: float) -> bool:
        return self.lower < eta < self.upper


def eta_range(payoff: PayoffSpec) -> EtaRange:
    """Admissible open damping interval of the payoff transform (per coordinate)."""
    if payoff.kind in ("call", "asset_or_nothing_down_out", "basket_min_call"):
        return EtaRange(-math.inf, -1.0)
    if payoff.kind == "put":
        return EtaRange(0.0, math.inf)
    return EtaRange(-math.inf, 0.0)  # digital_down_out


def check_eta(payoff: PayoffSpec, eta) -> None:
    """Validate a damping weight against range and pole guard.

    ``eta`` is a scalar for single-asset payoffs, a length-``dim`` vector for
    baskets.  Raises ``InadmissibleEtaError`` or ``PoleError``.
    """
    rng = eta_range(payoff)
    etas = np.atleast_1d(np.asarray(eta, dtype=float))
    if payoff.dim == 1 and etas.size != 1:
        raise InadmissibleEtaError("single-asset payoff takes a scalar damping weight")
    if payoff.dim > 1 and etas.size != payoff.dim:
        raise InadmissibleEtaError(f"basket damping weight must have length {payoff.dim}")
    for e in etas:
        if not rng.contains(e):
            raise InadmissibleEtaError(
                f"eta={e} outside admissible range ({rng.lower}, {rng.upper}) for {payoff.kind}"
            )
        for pole in _POLES[payoff.kind]:
            if abs(e - pole) < _POLE_TOL:
                raise PoleError(f"eta={e} within {_POLE_TOL} of pole at {pole}")
    if payoff.kind == "basket_min_call" and abs(1.0 + etas.sum()) < _POLE_TOL:
        raise PoleError("1 + sum(eta) too close to the basket pole")


def _ft_single(kind: str, lnk, s: np.ndarray) -> np.ndarray:
    """Closed forms for single-asset payoffs; s = i*Re(z) + Im(z), lnk = log(strike).

    Strike powers go through exp((.)*log K) with a real logarithm, so there
    is no branch ambiguity.  ``lnk`` may broadcast against ``s``.
    """
    if kind in ("call", "put"):
        return np.exp((s + 1.0) * lnk) / (s * (s + 1.0))
    if kind == "digital_down_out":
        return -np.exp(s * lnk) / s
    # asset_or_nothing_down_out
    return -np.exp((s + 1.0) * lnk) / (s + 1.0)


def _ft_basket_min(lnk, s: np.ndarray) -> np.ndarray:
    """Min-of-d-assets call transform; s has the coordinate axis last."""
    d = s.shape[-1]
    total = s.sum(axis=-1)
    num = -np.exp((1.0 + total) * lnk)
    den = np.prod(s, axis=-1) * (1.0 + total)
    return (-1.0) ** d * num / den


def payoff_ft(payoff: PayoffSpec, z) -> complex | np.ndarray:
    """Generalized Fourier transform of the payoff at complex argument ``z``.

    For single-asset payoffs ``z`` is a complex scalar or array; for baskets
    the coordinate axis comes last.  The imaginary part (the damping weight)
    must lie inside ``eta_range(payoff)`` componentwise.
    """
    z = np.asarray(z, dtype=complex)
    if payoff.kind == "basket_min_call":
        if z.shape == () or z.shape[-1] != payoff.dim:
            raise InadmissibleEtaError(f"basket argument must have trailing axis {payoff.dim}")
        eta = np.imag(z).reshape(-1, payoff.dim)
        if not np.allclose(eta, eta[0]):
            raise InadmissibleEtaError("damping weight must be constant across the argument")
        check_eta(payoff, eta[0])
        s = 1j * np.real(z) + np.imag(z)
        out = _ft_basket_min(math.log(payoff.strike), s)
    else:
        eta = np.unique(np.imag(z))
        if eta.size != 1:
            raise InadmissibleEtaError("damping weight must be constant across the argument")
        check_eta(payoff, float(eta[0]))
        s = 1j * np.real(z) + np.imag(z)
        out = _ft_single(payoff.kind, math.log(payoff.strike), s)
    if out.shape == ():
        return complex(out)
    return out
