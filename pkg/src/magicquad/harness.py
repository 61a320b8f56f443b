"""Run configuration, parameter-cloud sampling and the empirical studies.

Three studies mirror the validation workflow: the offline convergence study
(residual decay while the rule is trained), the out-of-sample pricing study
(fresh draws priced by the rule against reference quadrature at every level)
and the cosine-method comparison (per-term accuracy of both methods on the
truncation-filtered sample).  Each study emits plot-ready CSV files; floats
are written with 17 significant digits and runs are byte-reproducible for a
fixed configuration.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cosine import CosSettings, cos_series_terms
from .eim import MagicRule, TrainingSet, compute_weights, train
from .errors import ConfigError, RejectionStarvationError
from .models import (
    FREE_COORDS,
    ModelParams,
    ParamBox,
    _implied_variance_arrays,
    select_eta,
)
from .payoffs import PayoffSpec
from .pricing import IntegrandSpec, ParamPoint, PriceRequest, prefactor, price_reference, truncation_tail
from .quadrature import QuadSettings, make_tensor_grid, make_uniform_grid

CONFIG_VERSION = 1
RNG_ALGORITHM = "PCG64"

# Default free-coordinate intervals of the five shipped experiment setups.
TABLE_BOXES = {
    "bs": {"sigma": (0.1, 0.9)},
    "merton": {"sigma": (0.1, 0.7), "alpha": (-1.5, -0.1), "beta": (0.1, 1.0), "lam": (1e-5, 1.0)},
    "nig": {"alpha": (1e-5, 3.0), "beta": (-3.0, 3.0), "delta": (0.2, 1.0)},
    "cgmy": {"C": (1e-5, 1.0), "G": (0.0, 25.0), "M": (0.0, 30.0)},
    "heston": {"v0": (0.2**2, 0.3**2), "theta": (0.15**2, 0.35**2), "rho": (-1.0, 1.0)},
}

DEFAULT_COS_L = {"bs": 14.0, "heston": 18.0, "merton": 3.1}

# Offline phase quadrature (snapshot integrals for the online weights).
OFFLINE_QUAD = QuadSettings(abs_tol=1e-14, rel_tol=1e-12, max_intervals=200_000)
# Reference pricing in the studies.
REFERENCE_QUAD = QuadSettings(abs_tol=1e-12, rel_tol=1e-12, max_intervals=200_000)

TAIL_THRESHOLD = 1e-8
REL_ERR_FLOOR = 1e-3


def default_box(model: str) -> ParamBox:
    """Shipped experiment box for a model: moneyness, maturity and free params."""
    if model not in TABLE_BOXES:
        raise ConfigError(f"no default box for model {model!r}")
    return ParamBox(
        model=model,
        s0k=(0.5, 2.0),
        maturity=(0.1, 1.5),
        params={k: tuple(v) for k, v in TABLE_BOXES[model].items()},
    )


@dataclass(frozen=True)
class RunConfig:
    """One experiment setup; unspecified fields take the shipped defaults."""

    model: str
    box: ParamBox
    payoff: str = "call"
    cloud_size: int = 4000
    grid_lo: float = 0.0
    grid_hi: float = 65.0
    grid_count: int = 1714
    tol: float = 1e-10
    m_max: int = 50
    eta: float | None = None
    seed: int = 20160915
    rate: float = 0.0
    out_dir: str = "out"

    def payoff_spec(self) -> PayoffSpec:
        return PayoffSpec(self.payoff, self.box.strike)

    def resolved_eta(self) -> float:
        if self.eta is not None:
            return float(self.eta)
        return select_eta(self.box, self.payoff_spec())

    def integrand_spec(self) -> IntegrandSpec:
        return IntegrandSpec(
            payoff=self.payoff_spec(), model=self.model, eta=self.resolved_eta(), rate=self.rate
        )

    def oos_seed(self) -> int:
        # Independent stream for the out-of-sample draws.
        return self.seed + 1_000_003


def config_from_dict(doc: dict) -> RunConfig:
    """Build a RunConfig from a parsed configuration document."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    try:
        model = doc["model"]
    except KeyError as exc:
        raise ConfigError("configuration must name a model") from exc
    box_doc = doc.get("box", {})
    base = default_box(model)
    box = ParamBox(
        model=model,
        s0k=tuple(box_doc.get("s0k", base.s0k)),
        maturity=tuple(box_doc.get("T", base.maturity)),
        params={k: tuple(v) for k, v in box_doc.get("params", base.params).items()},
        fixed=dict(box_doc.get("fixed", {})),
        strike=float(box_doc.get("strike", base.strike)),
        strip_width=float(box_doc.get("strip_width", base.strip_width)),
        variance_bounds=tuple(box_doc.get("variance_bounds", base.variance_bounds)),
    )
    grid = doc.get("grid", {})
    try:
        return RunConfig(
            model=model,
            box=box,
            payoff=doc.get("payoff", "call"),
            cloud_size=int(doc.get("cloud_size", 4000)),
            grid_lo=float(grid.get("lo", 0.0)),
            grid_hi=float(grid.get("hi", 65.0)),
            grid_count=int(grid.get("count", 1714)),
            tol=float(doc.get("tol", 1e-10)),
            m_max=int(doc.get("m_max", 50)),
            eta=None if doc.get("eta") is None else float(doc["eta"]),
            seed=int(doc.get("seed", 20160915)),
            rate=float(doc.get("rate", 0.0)),
            out_dir=str(doc.get("out_dir", "out")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed configuration value: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# Parameter-cloud sampling.
# ---------------------------------------------------------------------------


def _joint_mask(box: ParamBox, draws: dict[str, np.ndarray]) -> np.ndarray:
    """Per-draw admissibility: model domain, shared strip and variance window."""
    model = box.model
    n = next(iter(draws.values())).size
    ok = np.ones(n, dtype=bool)
    r2 = 2.0 * box.strip_width
    if model == "bs":
        var = draws["sigma"] ** 2
    elif model == "merton":
        var = _implied_variance_arrays(
            "merton", (draws["sigma"], draws["alpha"], draws["beta"], draws["lam"])
        )
    elif model == "cgmy":
        ok &= draws["M"] > 1.0 + r2
        with np.errstate(divide="ignore"):
            var = _implied_variance_arrays(
                "cgmy",
                (draws["C"], draws["G"], draws["M"], np.full(n, box.fixed["Y"])),
            )
    elif model == "nig":
        alpha, beta = draws["alpha"], draws["beta"]
        ok &= alpha**2 > beta**2
        ok &= alpha**2 >= (beta + 1.0) ** 2
        ok &= alpha - beta > r2 + 1.0
        ok &= alpha + beta > -1.0
        var = np.full(n, np.inf)
        var[ok] = _implied_variance_arrays("nig", (draws["delta"][ok], alpha[ok], beta[ok]))
    else:  # heston
        kappa, sigma = box.fixed["kappa"], box.fixed["sigma"]
        ok &= sigma**2 <= 2.0 * kappa * draws["theta"]
        var = draws["v0"]
    lo, hi = box.variance_bounds
    with np.errstate(invalid="ignore"):
        ok &= np.isfinite(var) & (var >= lo) & (var <= hi)
    return ok


def sample_cloud_stats(box: ParamBox, n: int, seed: int) -> tuple[list[ParamPoint], dict]:
    """Uniform box draws with joint-constraint rejection; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    names = ["s0k", "T", *FREE_COORDS[box.model]]
    intervals = [box.s0k, box.maturity] + [box.interval(k) for k in FREE_COORDS[box.model]]
    accepted: list[ParamPoint] = []
    attempts = 0
    batch = max(4 * n, 1024)
    while len(accepted) < n:
        u = rng.random((batch, len(names)))
        attempts += batch
        cols = {
            name: lo + (hi - lo) * u[:, k]
            for k, (name, (lo, hi)) in enumerate(zip(names, intervals))
        }
        ok = _joint_mask(box, {k: v for k, v in cols.items() if k not in ("s0k", "T")})
        idx = np.nonzero(ok)[0]
        for i in idx:
            draw = {k: float(v[i]) for k, v in cols.items()}
            accepted.append(
                ParamPoint(
                    spot=draw["s0k"] * box.strike,
                    strike=box.strike,
                    maturity=draw["T"],
                    q=box.assemble_q(draw),
                )
            )
            if len(accepted) == n:
                break
        if attempts >= 10_000_000 and len(accepted) / attempts < 1e-3:
            raise RejectionStarvationError(
                f"acceptance rate {len(accepted) / attempts:.2e} after {attempts} attempts"
            )
    stats = {"attempts": attempts, "acceptance_rate": len(accepted) / attempts, "rng": RNG_ALGORITHM}
    return accepted, stats


def sample_cloud(box: ParamBox, n: int, seed: int) -> list[ParamPoint]:
    """Accepted parameter cloud of size ``n`` (see ``sample_cloud_stats``)."""
    return sample_cloud_stats(box, n, seed)[0]


# ---------------------------------------------------------------------------
# Study reports.
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if v is None:
        return ""
    return str(v)


@dataclass
class StudyReport:
    """CSV-backed study output: named tables plus stable metadata."""

    kind: str
    model: str
    tables: dict[str, tuple[list[str], list[list]]]
    metadata: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict, repr=False)
    wall_clock: float = 0.0

    def write_csv(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, (columns, rows) in self.tables.items():
            path = out / f"{name}.csv"
            lines = [f"# {k}={_fmt(v)}" for k, v in sorted(self.metadata.items())]
            lines.append(",".join(columns))
            lines.extend(",".join(_fmt(v) for v in row) for row in rows)
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
        return written


def _base_metadata(cfg: RunConfig) -> dict:
    return {
        "model": cfg.model,
        "payoff": cfg.payoff,
        "cloud_size": cfg.cloud_size,
        "grid": f"[{_fmt(cfg.grid_lo)};{_fmt(cfg.grid_hi)}]x{cfg.grid_count}",
        "tol": cfg.tol,
        "m_max": cfg.m_max,
        "eta": cfg.resolved_eta(),
        "seed": cfg.seed,
        "rate": cfg.rate,
        "rng": RNG_ALGORITHM,
    }


# ---------------------------------------------------------------------------
# Studies.
# ---------------------------------------------------------------------------


def run_offline_study(cfg: RunConfig, keep_training_set: bool = False) -> tuple[StudyReport, MagicRule]:
    """Train the rule on the configured cloud and report the residual decay."""
    t0 = time.perf_counter()
    eta = cfg.resolved_eta()
    spec = cfg.integrand_spec()
    cloud, stats = sample_cloud_stats(cfg.box, cfg.cloud_size, cfg.seed)
    grid = make_uniform_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_count, eta)
    values = spec.h_matrix(cloud, grid)
    ts = TrainingSet(cloud=cloud, grid=grid, values=values, spec=spec)
    rule = train(ts, tol=cfg.tol, m_max=cfg.m_max)
    rule.created_seed = cfg.seed
    compute_weights(rule, spec, OFFLINE_QUAD)
    wall = time.perf_counter() - t0

    rows = [[m + 1, r] for m, r in enumerate(rule.residual_history)]
    meta = _base_metadata(cfg)
    meta["acceptance_rate"] = stats["acceptance_rate"]
    arrays = {"residual_history": rule.residual_history, "final_residual": rule.final_residual}
    if keep_training_set:
        arrays["training_set"] = ts
    report = StudyReport(
        kind="offline",
        model=cfg.model,
        tables={"residuals": (["M", "residual"], rows)},
        metadata=meta,
        arrays=arrays,
        wall_clock=wall,
    )
    return report, rule


def _magic_level_prices(rule: MagicRule, spec: IntegrandSpec, points: list[ParamPoint]) -> np.ndarray:
    """(n_points, M) matrix of online prices at every rule level."""
    lw = rule.level_weight_matrix()
    pref = prefactor(rule.dim)
    out = np.empty((len(points), rule.m))
    for i, p in enumerate(points):
        h = np.asarray(spec.h(p, rule.magic_points), dtype=float)
        out[i] = pref * (lw @ h)
    return out


def _reference_prices(cfg: RunConfig, points: list[ParamPoint]) -> np.ndarray:
    spec_payoff = cfg.payoff_spec()
    eta = cfg.resolved_eta()
    refs = np.empty(len(points))
    for i, p in enumerate(points):
        req = PriceRequest(
            payoff=spec_payoff,
            model=ModelParams(cfg.model, p.q, cfg.rate),
            spot=p.spot,
            maturity=p.maturity,
            eta=eta,
            omega=(cfg.grid_lo, cfg.grid_hi),
        )
        refs[i] = price_reference(req, REFERENCE_QUAD)
    return refs


def _tail_estimates(cfg: RunConfig, points: list[ParamPoint]) -> np.ndarray:
    spec_payoff = cfg.payoff_spec()
    eta = cfg.resolved_eta()
    tails = np.empty(len(points))
    for i, p in enumerate(points):
        req = PriceRequest(
            payoff=spec_payoff,
            model=ModelParams(cfg.model, p.q, cfg.rate),
            spot=p.spot,
            maturity=p.maturity,
            eta=eta,
            omega=(cfg.grid_lo, cfg.grid_hi),
        )
        tails[i] = truncation_tail(req, cfg.grid_hi, 2.0 * cfg.grid_hi, REFERENCE_QUAD)
    return tails


def run_out_of_sample(
    cfg: RunConfig, rule: MagicRule, n_test: int = 1000, seed: int | None = None
) -> StudyReport:
    """Price fresh draws with the rule at every level against reference quadrature."""
    t0 = time.perf_counter()
    seed = cfg.oos_seed() if seed is None else seed
    spec = cfg.integrand_spec()
    points, stats = sample_cloud_stats(cfg.box, n_test, seed)

    refs = _reference_prices(cfg, points)
    tails = _tail_estimates(cfg, points)
    level_prices = _magic_level_prices(rule, spec, points)
    abs_err_by_level = np.abs(level_prices - refs[:, None])
    linf = abs_err_by_level.max(axis=0)

    final_err = abs_err_by_level[:, -1]
    sample_rows = []
    for i, p in enumerate(points):
        rel = final_err[i] / refs[i] if refs[i] > REL_ERR_FLOOR else None
        sample_rows.append(
            [
                i,
                p.spot,
                p.maturity,
                *p.q,
                refs[i],
                level_prices[i, -1],
                final_err[i],
                rel,
                tails[i],
                tails[i] <= TAIL_THRESHOLD,
            ]
        )
    q_names = [f"q{k}" for k in range(len(points[0].q))]
    sample_cols = [
        "index",
        "spot",
        "maturity",
        *q_names,
        "reference_price",
        "magic_price",
        "abs_err",
        "rel_err",
        "tail",
        "included",
    ]

    # In-sample sanity: the rule must reproduce its own magic parameters.
    insample_refs = _reference_prices(cfg, rule.magic_params)
    insample_prices = _magic_level_prices(rule, spec, rule.magic_params)[:, -1]
    insample_max_err = float(np.abs(insample_prices - insample_refs).max())

    meta = _base_metadata(cfg)
    meta.update({"oos_seed": seed, "n_test": n_test, "acceptance_rate": stats["acceptance_rate"]})
    report = StudyReport(
        kind="oos",
        model=cfg.model,
        tables={
            "oos_linf": (["M", "linf_abs_err"], [[m + 1, linf[m]] for m in range(rule.m)]),
            "oos_samples": (sample_cols, sample_rows),
        },
        metadata=meta,
        arrays={
            "linf_by_m": linf,
            "abs_err": final_err,
            "rel_err": np.where(refs > REL_ERR_FLOOR, final_err / refs, np.nan),
            "refs": refs,
            "tails": tails,
            "insample_max_err": insample_max_err,
            "points": points,
        },
        wall_clock=time.perf_counter() - t0,
    )
    return report


def run_cos_comparison(
    cfg: RunConfig,
    rule: MagicRule,
    trunc_l: float | None = None,
    n_test: int = 1000,
    seed: int | None = None,
    oos_report: StudyReport | None = None,
) -> StudyReport:
    """Per-term accuracy of the rule and the cosine method on the filtered sample.

    Samples whose truncation tail exceeds the threshold are excluded so that
    the bounded-domain reference is a valid benchmark for both methods.
    Passing the matching out-of-sample report reuses its draws and reference
    prices.
    """
    t0 = time.perf_counter()
    if trunc_l is None:
        if cfg.model not in DEFAULT_COS_L:
            raise ConfigError(f"no default cosine truncation multiplier for {cfg.model!r}")
        trunc_l = DEFAULT_COS_L[cfg.model]
    seed = cfg.oos_seed() if seed is None else seed
    spec = cfg.integrand_spec()

    if oos_report is not None:
        points = oos_report.arrays["points"]
        refs = oos_report.arrays["refs"]
        tails = oos_report.arrays["tails"]
    else:
        points, _ = sample_cloud_stats(cfg.box, n_test, seed)
        refs = _reference_prices(cfg, points)
        tails = _tail_estimates(cfg, points)

    included = tails <= TAIL_THRESHOLD
    kept = [p for p, keep in zip(points, included) if keep]
    kept_refs = refs[included]

    # Compare over the configured level budget; a rule that converged with
    # fewer points simply holds its final accuracy on the remaining levels.
    n_levels = max(cfg.m_max, rule.m)
    level_prices = _magic_level_prices(rule, spec, kept)
    magic_err = np.abs(level_prices - kept_refs[:, None])
    magic_err = np.hstack([magic_err, np.tile(magic_err[:, -1:], n_levels - rule.m)])

    payoff = cfg.payoff_spec()
    cos_err = np.empty((len(kept), n_levels))
    for i, p in enumerate(kept):
        model = ModelParams(cfg.model, p.q, cfg.rate)
        terms = cos_series_terms(model, payoff, p.spot, p.maturity, CosSettings(n_levels, trunc_l))
        cos_err[i] = np.abs(np.cumsum(terms) - kept_refs[i])

    magic_linf = magic_err.max(axis=0)
    cos_linf = cos_err.max(axis=0)
    # Relative curves on prices above the noise floor.
    above = kept_refs > REL_ERR_FLOOR
    magic_linf_rel = (magic_err[above] / kept_refs[above, None]).max(axis=0)
    cos_linf_rel = (cos_err[above] / kept_refs[above, None]).max(axis=0)

    rows = [
        [m + 1, magic_linf[m], cos_linf[m], magic_linf_rel[m], cos_linf_rel[m]]
        for m in range(n_levels)
    ]
    meta = _base_metadata(cfg)
    meta.update(
        {
            "oos_seed": seed,
            "cos_L": trunc_l,
            "n_test": len(points),
            "n_included": int(included.sum()),
            "tail_threshold": TAIL_THRESHOLD,
        }
    )
    report = StudyReport(
        kind="cos",
        model=cfg.model,
        tables={
            "cos_compare": (
                ["M", "magic_linf", "cos_linf", "magic_linf_rel", "cos_linf_rel"],
                rows,
            )
        },
        metadata=meta,
        arrays={
            "magic_linf": magic_linf,
            "cos_linf": cos_linf,
            "magic_linf_rel": magic_linf_rel,
            "cos_linf_rel": cos_linf_rel,
            "included": included,
            "tails": tails,
        },
        wall_clock=time.perf_counter() - t0,
    )
    return report


# ---------------------------------------------------------------------------
# Two-asset demonstration: min-of-two call with the strike as the only free
# parameter, trained on a small frequency tensor grid.
# ---------------------------------------------------------------------------

BASKET_DEFAULTS = {
    "strike_bounds": (0.5, 2.0),
    "n_train": 64,
    "n_test": 50,
    "maturity": 1.0,
    # packed lower triangle of the covariance matrix (vols 0.2/0.25, corr 0.3)
    "cov": (0.04, 0.015, 0.0625),
    "eta": (-1.5, -1.5),
    "bounds": ((0.0, 35.0), (-35.0, 35.0)),
    "counts": (61, 121),
    "tol": 1e-9,
    "m_max": 15,
    "seed": 20160915,
}

BASKET_WEIGHT_QUAD = QuadSettings(abs_tol=1e-12, rel_tol=1e-11, max_intervals=200_000)
BASKET_REFERENCE_QUAD = QuadSettings(abs_tol=1e-10, rel_tol=1e-10, max_intervals=200_000)


def run_basket_demo(out_dir: str | Path | None = None, **overrides) -> tuple[StudyReport, MagicRule]:
    """Train and check the two-asset min-call rule; see ``BASKET_DEFAULTS``."""
    t0 = time.perf_counter()
    opts = dict(BASKET_DEFAULTS)
    opts.update(overrides)
    rng = np.random.default_rng(opts["seed"])
    k_lo, k_hi = opts["strike_bounds"]
    cov = tuple(opts["cov"])
    maturity = opts["maturity"]

    def make_point(strike: float) -> ParamPoint:
        return ParamPoint(spot=(1.0, 1.0), strike=float(strike), maturity=maturity, q=cov)

    payoff = PayoffSpec("basket_min_call", 1.0, dim=2)
    spec = IntegrandSpec(payoff=payoff, model="bs", eta=opts["eta"], rate=0.0, dim=2)
    grid = make_tensor_grid(list(opts["bounds"]), list(opts["counts"]), list(opts["eta"]))

    cloud = [make_point(k) for k in rng.uniform(k_lo, k_hi, opts["n_train"])]
    values = spec.h_matrix(cloud, grid)
    ts = TrainingSet(cloud=cloud, grid=grid, values=values, spec=spec)
    rule = train(ts, tol=opts["tol"], m_max=opts["m_max"])
    rule.created_seed = opts["seed"]
    compute_weights(rule, spec, BASKET_WEIGHT_QUAD)

    test_strikes = rng.uniform(k_lo, k_hi, opts["n_test"])
    pref = prefactor(2)
    rows = []
    errs = np.empty(len(test_strikes))
    for i, k in enumerate(test_strikes):
        p = make_point(k)
        req = PriceRequest(
            payoff=PayoffSpec("basket_min_call", float(k), dim=2),
            model=ModelParams("bs", cov, 0.0),
            spot=(1.0, 1.0),
            maturity=maturity,
            eta=opts["eta"],
            omega=tuple(opts["bounds"]),
        )
        ref = price_reference(req, BASKET_REFERENCE_QUAD)
        h = np.asarray(spec.h(p, rule.magic_points), dtype=float)
        magic = pref * float(h @ rule.weights)
        errs[i] = abs(magic - ref)
        rows.append([float(k), ref, magic, errs[i]])

    report = StudyReport(
        kind="basket",
        model="bs",
        tables={
            "basket_residuals": (
                ["M", "residual"],
                [[m + 1, r] for m, r in enumerate(rule.residual_history)],
            ),
            "basket_prices": (["strike", "reference_price", "magic_price", "abs_err"], rows),
        },
        metadata={
            "model": "bs",
            "payoff": "basket_min_call",
            "dim": 2,
            "seed": opts["seed"],
            "rng": RNG_ALGORITHM,
            "maturity": maturity,
            "cov": ";".join(_fmt(c) for c in cov),
            "eta": ";".join(_fmt(e) for e in opts["eta"]),
        },
        arrays={
            "residual_history": rule.residual_history,
            "abs_err": errs,
            "final_residual": rule.final_residual,
        },
        wall_clock=time.perf_counter() - t0,
    )
    if out_dir is not None:
        report.write_csv(out_dir)
    return report, rule
