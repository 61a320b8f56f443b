"""Offline-online empirical quadrature engine for parametric Fourier option pricing.

The offline phase greedily tailors an interpolatory quadrature rule to a
family of Fourier pricing integrands; the online phase prices an arbitrary
parameter constellation as a short weighted sum of closed-form integrand
evaluations.
"""

from ._kernels import backend_name
from .eim import MagicRule, TrainingSet, compute_weights, load_rule, online_integrate, save_rule, train
from .models import ModelParams, ParamBox, char_fn, implied_variance, select_eta, validate_box
from .payoffs import EtaRange, PayoffSpec, eta_range, payoff_ft
from .pricing import (
    IntegrandSpec,
    ParamPoint,
    PriceRequest,
    price_magic,
    price_reference,
    truncation_tail,
)
from .quadrature import FreqGrid, QuadSettings, integrate_adaptive, make_uniform_grid

__version__ = "0.1.0"

__all__ = [
    "EtaRange",
    "FreqGrid",
    "IntegrandSpec",
    "MagicRule",
    "ModelParams",
    "ParamBox",
    "ParamPoint",
    "PayoffSpec",
    "PriceRequest",
    "QuadSettings",
    "TrainingSet",
    "backend_name",
    "char_fn",
    "compute_weights",
    "eta_range",
    "implied_variance",
    "integrate_adaptive",
    "load_rule",
    "make_uniform_grid",
    "online_integrate",
    "payoff_ft",
    "price_magic",
    "price_reference",
    "save_rule",
    "select_eta",
    "train",
    "truncation_tail",
    "validate_box",
    "__version__",
]
