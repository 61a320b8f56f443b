"""Characteristic functions on the damping strip, parameter boxes and damping selection.

Five asset models are supported: multivariate Black-Scholes ("bs"), Merton
jump diffusion ("merton"), CGMY ("cgmy"), normal inverse Gaussian ("nig") and
Heston ("heston").  Every characteristic function is the transform of the
risk-neutral log-return at maturity, with the drift fixed by the martingale
condition E[exp(X_T)] = exp(r*T).

Drift constants are evaluated through the same complex kernels as the
runtime characteristic function so that the martingale identity cancels to
machine precision instead of accumulating independent rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma

from .errors import InfeasibleEtaError, InvalidParamsError, StripViolationError
from .payoffs import PayoffSpec, check_eta, eta_range

MODELS = ("bs", "merton", "nig", "cgmy", "heston")

_VARIANCE_BOUNDS = (0.01**2, 0.8**2)


def _tri_dim(n: int) -> int:
    """Matrix dimension d with d(d+1)/2 == n, or raise."""
    d = int((math.isqrt(8 * n + 1) - 1) // 2)
    if d * (d + 1) // 2 != n:
        raise InvalidParamsError(f"covariance vector length {n} is not triangular")
    return d


def covariance_matrix(q) -> np.ndarray:
    """Assemble the symmetric covariance matrix from its packed lower triangle."""
    q = np.asarray(q, dtype=float)
    d = _tri_dim(q.size)
    sig = np.zeros((d, d))
    k = 0
    for i in range(d):
        for j in range(i + 1):
            sig[i, j] = sig[j, i] = q[k]
            k += 1
    return sig


@dataclass(frozen=True)
class ModelParams:
    """One model parametrization: family id, parameter vector and rate.

    Parameter vector layout per family:
      bs      packed lower triangle of the covariance matrix, d(d+1)/2 entries
      merton  (sigma, alpha, beta, lam)
      cgmy    (C, G, M, Y)
      nig     (delta, alpha, beta)
      heston  (v0, kappa, theta, sigma, rho)
    """

    model: str
    q: tuple[float, ...]
    rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise InvalidParamsError(f"unknown model {self.model!r}")
        if self.rate < 0:
            raise InvalidParamsError("risk-free rate must be >= 0")
        q = self.q
        if self.model == "bs":
            sig = covariance_matrix(q)
            try:
                np.linalg.cholesky(sig)
            except np.linalg.LinAlgError:
                raise InvalidParamsError("covariance matrix is not positive definite") from None
        elif self.model == "merton":
            sigma, _alpha, beta, lam = _expect(q, 4, "merton")
            if not (sigma > 0 and beta >= 0 and lam > 0):
                raise InvalidParamsError("merton requires sigma>0, beta>=0, lam>0")
        elif self.model == "cgmy":
            c, g, m, y = _expect(q, 4, "cgmy")
            if not (c > 0 and g >= 0 and m >= 1 and 1 < y < 2):
                raise InvalidParamsError("cgmy requires C>0, G>=0, M>=1, Y in (1,2)")
        elif self.model == "nig":
            delta, alpha, beta = _expect(q, 3, "nig")
            if not (delta > 0 and alpha > 0 and alpha**2 > beta**2 and alpha**2 >= (beta + 1) ** 2):
                raise InvalidParamsError("nig requires delta>0, alpha>0, alpha^2>beta^2, alpha^2>=(beta+1)^2")
        else:  # heston
            v0, kappa, theta, sigma, rho = _expect(q, 5, "heston")
            if not (v0 > 0 and kappa > 0 and theta > 0 and sigma > 0):
                raise InvalidParamsError("heston requires v0, kappa, theta, sigma > 0")
            if not -1 <= rho <= 1:
                raise InvalidParamsError("heston correlation must lie in [-1, 1]")
            if sigma**2 > 2 * kappa * theta:
                raise InvalidParamsError("heston violates the Feller condition sigma^2 <= 2*kappa*theta")

    @property
    def dim(self) -> int:
        return _tri_dim(len(self.q)) if self.model == "bs" else 1


def _expect(q, n: int, model: str):
    if len(q) != n:
        raise InvalidParamsError(f"{model} takes {n} parameters, got {len(q)}")
    return q


# ---------------------------------------------------------------------------
# Characteristic-function kernels.  All accept broadcastable array arguments
# (parameter columns against a frequency row) and complex z.
# ---------------------------------------------------------------------------


def _cf_bs1(var, r, T, z):
    b = r - 0.5 * var
    return np.exp(T * (1j * b * z - 0.5 * var * z * z))


def _cf_merton(sigma, alpha, beta, lam, r, T, z):
    var = sigma * sigma
    jump = np.exp(1j * alpha * z - 0.5 * beta * beta * z * z) - 1.0
    jump_at_mi = np.exp(1j * alpha * (-1j) - 0.5 * beta * beta * (-1j) * (-1j)) - 1.0
    b = r - 0.5 * var - lam * jump_at_mi.real
    return np.exp(T * (1j * b * z - 0.5 * var * z * z + lam * jump))


def _cgmy_bracket(c_, g_, m_, y_, z):
    return (
        np.power(m_ - 1j * z, y_)
        - np.power(m_ + 0j, y_)
        + np.power(g_ + 1j * z, y_)
        - np.power(g_ + 0j, y_)
    )


def _cf_cgmy(c_, g_, m_, y_, r, T, z):
    gam = _gamma(-y_)
    b = r - c_ * gam * _cgmy_bracket(c_, g_, m_, y_, -1j).real
    return np.exp(T * (1j * b * z + c_ * gam * _cgmy_bracket(c_, g_, m_, y_, z)))


def _cf_nig(delta, alpha, beta, r, T, z):
    root0 = np.sqrt(alpha * alpha - beta * beta + 0j)
    root = np.sqrt(alpha * alpha - (beta + 1j * z) ** 2)
    root_at_mi = np.sqrt(alpha * alpha - (beta + 1j * (-1j)) ** 2)
    b = r - delta * (root0.real - root_at_mi.real)
    return np.exp(T * (1j * b * z + delta * (root0 - root)))


def _cf_heston(v0, kappa, theta, sigma, rho, r, T, z):
    a = kappa - 1j * rho * sigma * z
    c = np.sqrt(a * a - sigma * sigma * (-1j * z - z * z))
    g = (a - c) / (a + c)
    emct = np.exp(-c * T)
    sig2 = sigma * sigma
    term_v = (v0 / sig2) * (a - c) * (1.0 - emct) / (1.0 - g * emct)
    term_th = (kappa * theta / sig2) * ((a - c) * T - 2.0 * np.log((1.0 - g * emct) / (1.0 - g)))
    return np.exp(1j * r * z * T + term_v + term_th)


def _cf_bs_multi(cov: np.ndarray, r, T, z):
    """Multivariate Brownian kernel; z has the coordinate axis last."""
    d = cov.shape[0]
    b = r - 0.5 * np.diag(cov)
    quad = np.einsum("...i,ij,...j->...", z, cov, z)
    drift = z @ b
    return np.exp(T * (1j * drift - 0.5 * quad))


def _cf_arrays(model: str, q_cols: tuple, r, T, z):
    """Dispatch on broadcastable raw arrays (univariate models only)."""
    if model == "bs":
        return _cf_bs1(q_cols[0], r, T, z)
    if model == "merton":
        return _cf_merton(*q_cols, r, T, z)
    if model == "cgmy":
        return _cf_cgmy(*q_cols, r, T, z)
    if model == "nig":
        return _cf_nig(*q_cols, r, T, z)
    if model == "heston":
        return _cf_heston(*q_cols, r, T, z)
    raise InvalidParamsError(f"unknown model {model!r}")


def _strip_bounds(model: str, q_cols: tuple):
    """Open interval of admissible Im(z) per parametrization, or None if entire."""
    if model == "cgmy":
        _c, g_, m_, _y = q_cols
        return -np.asarray(m_, dtype=float), np.asarray(g_, dtype=float)
    if model == "nig":
        _delta, alpha, beta = q_cols
        alpha = np.asarray(alpha, dtype=float)
        beta = np.asarray(beta, dtype=float)
        return beta - alpha, beta + alpha
    return None


def _check_strip_arrays(model: str, q_cols: tuple, im_z) -> None:
    bounds = _strip_bounds(model, q_cols)
    if bounds is None:
        return
    lo, hi = bounds
    im = np.asarray(im_z, dtype=float)
    if np.any(im <= lo) or np.any(im >= hi):
        raise StripViolationError(f"Im(z) outside the {model} strip of analyticity")


def char_fn(params: ModelParams, T: float, z):
    """Characteristic function of the log-return at maturity ``T``.

    ``z`` may be complex; its imaginary part must stay inside the model's
    strip of analyticity (checked for cgmy/nig, where the strip depends on
    the parameters).  For multivariate Black-Scholes the coordinate axis of
    ``z`` comes last.
    """
    if not T > 0:
        raise InvalidParamsError("maturity must be positive")
    z = np.asarray(z, dtype=complex)
    if params.model == "bs":
        cov = covariance_matrix(params.q)
        if cov.shape[0] == 1:
            out = _cf_bs1(params.q[0], params.rate, T, z)
        else:
            if z.shape == () or z.shape[-1] != cov.shape[0]:
                raise InvalidParamsError(f"argument must have trailing axis {cov.shape[0]}")
            out = _cf_bs_multi(cov, params.rate, T, z)
    else:
        _check_strip_arrays(params.model, params.q, np.imag(z))
        out = _cf_arrays(params.model, params.q, params.rate, T, z)
    if out.shape == ():
        return complex(out)
    return out


# ---------------------------------------------------------------------------
# Implied variance (t = 1) used by the plausibility filter.
# ---------------------------------------------------------------------------


def _implied_variance_arrays(model: str, q_cols: tuple):
    if model == "bs":
        return np.asarray(q_cols[0], dtype=float)
    if model == "merton":
        sigma, alpha, beta, lam = (np.asarray(v, dtype=float) for v in q_cols)
        return sigma**2 + lam * (alpha**2 + beta**2)
    if model == "cgmy":
        c_, g_, m_, y_ = (np.asarray(v, dtype=float) for v in q_cols)
        with np.errstate(divide="ignore"):
            return c_ * _gamma(2.0 - y_) * (m_ ** (y_ - 2.0) + g_ ** (y_ - 2.0))
    if model == "nig":
        delta, alpha, beta = (np.asarray(v, dtype=float) for v in q_cols)
        return delta * alpha**2 / (alpha**2 - beta**2) ** 1.5
    if model == "heston":
        return np.asarray(q_cols[0], dtype=float)
    raise InvalidParamsError(f"unknown model {model!r}")


def implied_variance(params: ModelParams) -> float:
    """Variance of the model's return at t = 1 (proxy v0 for Heston).

    For the Black-Scholes family this is the variance entry itself (maximum
    diagonal entry when multivariate).
    """
    if params.model == "bs":
        return float(np.diag(covariance_matrix(params.q)).max())
    return float(_implied_variance_arrays(params.model, params.q))


# ---------------------------------------------------------------------------
# Parameter boxes.
# ---------------------------------------------------------------------------

# Free-coordinate ordering per model; fixed entries complete the q vector.
FREE_COORDS = {
    "bs": ("sigma",),
    "merton": ("sigma", "alpha", "beta", "lam"),
    "nig": ("alpha", "beta", "delta"),
    "cgmy": ("C", "G", "M"),
    "heston": ("v0", "theta", "rho"),
}

DEFAULT_FIXED = {
    "bs": {},
    "merton": {},
    "nig": {},
    "cgmy": {"Y": 1.1},
    "heston": {"kappa": 2.0, "sigma": 0.15},
}


@dataclass(frozen=True)
class ParamBox:
    """Closed intervals for the free coordinates (moneyness, maturity, model params)."""

    model: str
    s0k: tuple[float, float]
    maturity: tuple[float, float]
    params: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    strike: float = 1.0
    strip_width: float = 0.5
    variance_bounds: tuple[float, float] = _VARIANCE_BOUNDS

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidParamsError(f"unknown model {self.model!r}")
        fixed = dict(DEFAULT_FIXED[self.model])
        fixed.update(self.fixed)
        object.__setattr__(self, "fixed", fixed)
        missing = [c for c in FREE_COORDS[self.model] if c not in self.params]
        if missing:
            raise InvalidParamsError(f"missing box intervals for {missing}")
        if not self.strip_width > 0:
            raise InvalidParamsError("strip width must be positive")

    def interval(self, name: str) -> tuple[float, float]:
        return tuple(float(v) for v in self.params[name])

    def assemble_q(self, draw: dict) -> tuple[float, ...]:
        """Build the canonical model parameter vector from a draw of free coords."""
        m = self.model
        if m == "bs":
            return (draw["sigma"] ** 2,)
        if m == "merton":
            return (draw["sigma"], draw["alpha"], draw["beta"], draw["lam"])
        if m == "nig":
            return (draw["delta"], draw["alpha"], draw["beta"])
        if m == "cgmy":
            return (draw["C"], draw["G"], draw["M"], self.fixed["Y"])
        return (draw["v0"], self.fixed["kappa"], draw["theta"], self.fixed["sigma"], draw["rho"])


def validate_box(box: ParamBox) -> list[str]:
    """Check every box-level admissibility constraint; violations are data, not errors.

    A reported corner violation does not make a box unusable: the sampler
    applies the same constraints jointly per draw, so boxes whose corners
    fail (e.g. wide nig boxes) are simply thinned by rejection.
    """
    violations: list[str] = []
    intervals = {"S0/K": box.s0k, "T": box.maturity}
    intervals.update({k: box.interval(k) for k in FREE_COORDS[box.model]})
    for name, (lo, hi) in intervals.items():
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            violations.append(f"interval {name} is empty or unbounded")
    if box.maturity[0] <= 0:
        violations.append("T must be positive")
    r2 = 2.0 * box.strip_width

    m = box.model
    if m == "bs" and box.interval("sigma")[0] <= 0:
        violations.append("sigma > 0")
    elif m == "merton":
        if box.interval("sigma")[0] <= 0:
            violations.append("sigma > 0")
        if box.interval("beta")[0] < 0:
            violations.append("beta >= 0")
        if box.interval("lam")[0] <= 0:
            violations.append("lam > 0")
    elif m == "cgmy":
        if box.interval("C")[0] <= 0:
            violations.append("C > 0")
        if not box.interval("M")[0] + r2 > 1:
            violations.append("M + 2R > 1")
        y = box.fixed["Y"]
        if not 1 < y < 2:
            violations.append("Y in (1, 2)")
    elif m == "nig":
        a_lo, a_hi = box.interval("alpha")
        b_lo, b_hi = box.interval("beta")
        if a_lo <= 0:
            violations.append("alpha > 0")
        if box.interval("delta")[0] <= 0:
            violations.append("delta > 0")
        if not a_lo - b_hi > r2 + 1:
            violations.append("alpha - beta > 2R + 1")
        if not a_lo + b_lo > -1:
            violations.append("alpha + beta > -1")
    elif m == "heston":
        kappa, sigma = box.fixed["kappa"], box.fixed["sigma"]
        v0_lo = box.interval("v0")[0]
        th_lo, _ = box.interval("theta")
        rho_lo, rho_hi = box.interval("rho")
        if min(v0_lo, th_lo, kappa, sigma) <= 0:
            violations.append("v0, kappa, theta, sigma > 0")
        if rho_lo < -1 or rho_hi > 1:
            violations.append("rho in [-1, 1]")
        if sigma**2 > 2 * kappa * th_lo:
            violations.append("Feller: sigma^2 <= 2*kappa*theta")

    if not _variance_window_reachable(box):
        violations.append("variance window infeasible")
    return violations


def _variance_window_reachable(box: ParamBox) -> bool:
    """Cheap probe: some corner/midpoint of the box hits the variance window."""
    names = FREE_COORDS[box.model]
    lo, hi = box.variance_bounds
    grids = [np.array([box.interval(n)[0], np.mean(box.interval(n)), box.interval(n)[1]]) for n in names]
    mesh = np.meshgrid(*grids, indexing="ij")
    draws = {n: g.ravel() for n, g in zip(names, mesh)}
    if box.model == "bs":
        var = draws["sigma"] ** 2
    elif box.model == "merton":
        var = _implied_variance_arrays("merton", (draws["sigma"], draws["alpha"], draws["beta"], draws["lam"]))
    elif box.model == "cgmy":
        with np.errstate(divide="ignore"):
            var = _implied_variance_arrays(
                "cgmy", (draws["C"], draws["G"], draws["M"], np.full_like(draws["C"], box.fixed["Y"]))
            )
    elif box.model == "nig":
        alpha, beta, delta = draws["alpha"], draws["beta"], draws["delta"]
        ok = alpha**2 > beta**2
        if not ok.any():
            return False
        var = _implied_variance_arrays("nig", (delta[ok], alpha[ok], beta[ok]))
    else:
        var = draws["v0"]
    var = var[np.isfinite(var)]
    return bool(np.any((var >= lo) & (var <= hi)))


def select_eta(box: ParamBox, payoff: PayoffSpec, strip_width: float | None = None, default: float = -1.5) -> float:
    """Damping weight jointly admissible for the payoff and the model strip.

    For cgmy/nig the value centers the shared strip of analyticity of the
    requested width inside the model strip (call-type payoffs only); the
    entire models fall back to the configured default.
    """
    r_ = box.strip_width if strip_width is None else strip_width
    rng = eta_range(payoff)
    if box.model == "cgmy":
        if rng.upper > -1:
            raise InfeasibleEtaError("strip-centered damping is derived for call-type payoffs")
        m_eff = max(box.interval("M")[0], 1.0 + 2.0 * r_)
        eta = -(m_eff + 1.0) / 2.0
    elif box.model == "nig":
        if rng.upper > -1:
            raise InfeasibleEtaError("strip-centered damping is derived for call-type payoffs")
        bma = min(box.interval("beta")[1] - box.interval("alpha")[0], -(1.0 + 2.0 * r_))
        eta = (bma - 1.0) / 2.0
    else:
        eta = default
    if not rng.contains(eta):
        raise InfeasibleEtaError(
            f"eta={eta} not admissible for {payoff.kind} (range ({rng.lower}, {rng.upper}))"
        )
    check_eta(payoff, eta if payoff.dim == 1 else [eta] * payoff.dim)
    return float(eta)
