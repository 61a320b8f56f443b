"""Greedy magic-point engine: offline training, interpolation operator, online weights.

Training operates on a discrete snapshot matrix (parameter cloud x frequency
grid).  Each iteration picks the worst-represented cloud row, normalizes its
residual into a new basis function and removes that component from every row
with a fused rank-1 update (see ``_kernels``).  The update zeroes the chosen
column exactly, which makes interpolation at magic points exact in floating
point, keeps the collocation matrix unit lower triangular and keeps basis
rows bounded by one.

Online integration weights are assembled from continuous adaptive
integrals of the selected snapshot integrands, so online accuracy is tied to
quadrature tolerance rather than to the training grid resolution.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels
from .errors import (
    DegenerateSetError,
    DimensionMismatchError,
    ExtrapolationWarning,
    MalformedFileError,
    NonFiniteIntegrandError,
    VersionMismatchError,
)
from .quadrature import (
    FreqGrid,
    QuadSettings,
    TensorGrid,
    integrate_adaptive,
    integrate_adaptive_2d,
    make_tensor_grid,
    make_uniform_grid,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingSet:
    """Snapshot matrix of a parametric integrand family on a frequency grid.

    ``values[i]`` holds the i-th cloud member evaluated on every grid node.
    """

    cloud: list
    grid: FreqGrid | TensorGrid
    values: np.ndarray
    spec: object | None = None

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2 or vals.shape[0] != len(self.cloud):
            raise DimensionMismatchError("values must be a (len(cloud), grid.count) matrix")
        if vals.shape[1] != self.grid.count:
            raise DimensionMismatchError("values row length must equal grid.count")
        if not np.isfinite(vals).all():
            bad = int(np.argwhere(~np.isfinite(vals).all(axis=1))[0][0])
            raise NonFiniteIntegrandError(f"non-finite integrand values in cloud row {bad}")
        if not np.abs(vals).max() > 0:
            raise DegenerateSetError("training set contains only the zero integrand")


@dataclass
class MagicRule:
    """Trained offline artifact: magic points, basis, collocation inverse, weights."""

    m: int
    magic_points: np.ndarray
    magic_param_indices: np.ndarray
    magic_params: list
    node_indices: np.ndarray
    basis: np.ndarray
    b_inverse: np.ndarray
    snapshot_coeffs: np.ndarray
    residual_history: np.ndarray
    final_residual: float
    converged: bool
    degenerate: bool
    eta: float | tuple
    omega_lo: float | tuple
    omega_hi: float | tuple
    grid_count: int | tuple
    dim: int = 1
    model_id: str = ""
    payoff_id: str = ""
    strike: float = 1.0
    rate: float = 0.0
    created_seed: int | None = None
    box_bounds: dict | None = None
    weights: np.ndarray | None = None
    snapshot_integrals: np.ndarray | None = None
    spec: object | None = field(default=None, repr=False)

    def b_matrix(self) -> np.ndarray:
        """Collocation matrix B[j, m] = basis_m(z*_j); unit lower triangular."""
        return self.basis[:, self.node_indices].T.copy()

    def grid(self) -> FreqGrid | TensorGrid:
        """Reconstruct the (uniform) training grid from the stored bounds."""
        if self.dim == 1:
            return make_uniform_grid(self.omega_lo, self.omega_hi, self.grid_count, self.eta)
        bounds = list(zip(self.omega_lo, self.omega_hi))
        return make_tensor_grid(bounds, list(self.grid_count), list(self.eta))

    def domain_size(self) -> float:
        """Lebesgue measure of the integration domain."""
        if self.dim == 1:
            return self.omega_hi - self.omega_lo
        return float(np.prod([h - l for l, h in zip(self.omega_lo, self.omega_hi)]))

    def weights_at_level(self, m: int) -> np.ndarray:
        """Online weights of the rule truncated to its first ``m`` points.

        Truncating the greedy process is exact: leading blocks of B and of
        its inverse correspond, so the level-m weights only need the stored
        snapshot integrals.
        """
        if self.snapshot_integrals is None:
            raise ValueError("weights have not been computed for this rule")
        if not 1 <= m <= self.m:
            raise DimensionMismatchError(f"level must be in [1, {self.m}]")
        basis_integrals = self.snapshot_coeffs[:m, :m] @ self.snapshot_integrals[:m]
        return self.b_inverse[:m, :m].T @ basis_integrals

    def level_weight_matrix(self) -> np.ndarray:
        """Row m-1 holds the level-m weights padded with zeros."""
        out = np.zeros((self.m, self.m))
        for m in range(1, self.m + 1):
            out[m - 1, :m] = self.weights_at_level(m)
        return out


def train(ts: TrainingSet, tol: float, m_max: int) -> MagicRule:
    """Greedy offline construction of a magic-point rule.

    Iteration m selects the cloud row whose current residual has the largest
    sup norm, the grid node where that residual peaks, and adds the residual
    normalized at that node to the basis.  Stops when the worst residual
    drops to ``tol`` or after ``m_max`` points.  Ties break to the smallest
    cloud index, then the smallest grid index.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if m_max < 1:
        raise ValueError("m_max must be >= 1")

    values = ts.values
    resid = values.copy()
    rowmax = _kernels.abs_rowmax(resid)

    if isinstance(ts.grid, FreqGrid):
        grid_points = ts.grid.nodes
        dim = 1
    else:
        grid_points = ts.grid.points()
        dim = ts.grid.dim

    sel_rows: list[int] = []
    sel_cols: list[int] = []
    basis_rows: list[np.ndarray] = []
    coeff_rows: list[np.ndarray] = []
    history: list[float] = []
    converged = False
    degenerate = False
    final_residual = float(rowmax.max())

    for m in range(m_max):
        i = int(np.argmax(rowmax))
        res = float(rowmax[i])
        if res <= tol:
            converged = True
            degenerate = res == 0.0
            final_residual = res
            break
        j = int(np.argmax(np.abs(resid[i])))
        denom = resid[i, j]

        # Interpolation coefficients of this snapshot in the current basis,
        # from the original row values at the already selected nodes.
        if m == 0:
            alpha = np.empty(0)
        else:
            b_mat = np.array([[basis_rows[k][sel_cols[jj]] for k in range(m)] for jj in range(m)])
            alpha = solve_triangular(b_mat, values[i, sel_cols], lower=True, unit_diagonal=True)

        q_row = resid[i] / denom
        coeff = np.zeros(m + 1)
        coeff[m] = 1.0 / denom
        for k in range(m):
            coeff[: k + 1] -= (alpha[k] / denom) * coeff_rows[k]

        sel_rows.append(i)
        sel_cols.append(j)
        basis_rows.append(q_row.copy())
        coeff_rows.append(coeff)
        history.append(res)

        rowmax = _kernels.rank1_update_rowmax(resid, resid[:, j].copy(), q_row)
        final_residual = float(rowmax.max())

    m_final = len(sel_rows)
    if m_final == 0:
        raise DegenerateSetError("initial residual already below tolerance; nothing to train")

    basis = np.vstack(basis_rows)
    coeffs = np.zeros((m_final, m_final))
    for k, row in enumerate(coeff_rows):
        coeffs[k, : k + 1] = row
    b_mat = basis[:, sel_cols].T
    b_inv = solve_triangular(b_mat, np.eye(m_final), lower=True, unit_diagonal=True)

    box_bounds = _cloud_bounds(ts.cloud)
    spec = ts.spec
    rule = MagicRule(
        m=m_final,
        magic_points=np.asarray(grid_points)[sel_cols].copy(),
        magic_param_indices=np.asarray(sel_rows, dtype=np.int64),
        magic_params=[ts.cloud[i] for i in sel_rows],
        node_indices=np.asarray(sel_cols, dtype=np.int64),
        basis=basis,
        b_inverse=b_inv,
        snapshot_coeffs=coeffs,
        residual_history=np.asarray(history),
        final_residual=final_residual,
        converged=converged,
        degenerate=degenerate and m_final < m_max,
        eta=ts.grid.eta,
        omega_lo=ts.grid.lo,
        omega_hi=ts.grid.hi,
        grid_count=ts.grid.count if dim == 1 else ts.grid.counts,
        dim=dim,
        model_id=getattr(spec, "model", ""),
        payoff_id=getattr(getattr(spec, "payoff", None), "kind", ""),
        strike=getattr(getattr(spec, "payoff", None), "strike", 1.0),
        rate=getattr(spec, "rate", 0.0),
        spec=spec,
        box_bounds=box_bounds,
    )
    return rule


def interpolate(rule: MagicRule, u_at_magic: np.ndarray) -> np.ndarray:
    """Interpolant of a function from its values at the magic points, on the grid.

    Solves the unit-lower-triangular collocation system by forward
    substitution, then combines basis rows.
    """
    u = np.asarray(u_at_magic, dtype=float)
    if u.shape != (rule.m,):
        raise DimensionMismatchError(f"expected {rule.m} magic-point values, got shape {u.shape}")
    alpha = solve_triangular(rule.b_matrix(), u, lower=True, unit_diagonal=True)
    return alpha @ rule.basis


def interpolation_coefficients(rule: MagicRule, u_at_magic: np.ndarray) -> np.ndarray:
    """Coefficients of the interpolant in the basis (forward substitution)."""
    u = np.asarray(u_at_magic, dtype=float)
    if u.shape != (rule.m,):
        raise DimensionMismatchError(f"expected {rule.m} magic-point values, got shape {u.shape}")
    return solve_triangular(rule.b_matrix(), u, lower=True, unit_diagonal=True)


def compute_weights(rule: MagicRule, spec, settings: QuadSettings | None = None) -> np.ndarray:
    """Online quadrature weights via continuous integrals of the magic snapshots.

    Each selected snapshot integrand is integrated adaptively over the
    continuous domain; the weights follow by the triangular linear algebra
    relating the dual basis to the snapshots.  Stores the weights (and the
    snapshot integrals) on the rule and returns the weights.
    """
    if settings is None:
        settings = QuadSettings()
    integrals = np.empty(rule.m)
    for k, p in enumerate(rule.magic_params):
        if rule.dim == 1:
            integrals[k] = integrate_adaptive(
                lambda xi: spec.h(p, xi), rule.omega_lo, rule.omega_hi, settings
            )
        elif rule.dim == 2:

            def f2(x, ys, _p=p):
                pts = np.stack([np.full_like(ys, x), ys], axis=-1)
                return spec.h(_p, pts)

            integrals[k] = integrate_adaptive_2d(
                f2,
                (rule.omega_lo[0], rule.omega_hi[0]),
                (rule.omega_lo[1], rule.omega_hi[1]),
                settings,
            )
        else:
            raise DimensionMismatchError("weights are implemented for dim 1 and 2")
    rule.snapshot_integrals = integrals
    basis_integrals = rule.snapshot_coeffs @ integrals
    rule.weights = rule.b_inverse.T @ basis_integrals
    return rule.weights


def online_integrate(rule: MagicRule, p, spec=None) -> float:
    """Integral of the integrand at parameter ``p`` as an M-term weighted sum.

    Costs exactly M closed-form integrand evaluations.  Parameters outside
    the training cloud's bounding box are still evaluated but flagged with
    an ``ExtrapolationWarning``.
    """
    spec = spec if spec is not None else rule.spec
    if spec is None:
        raise ValueError("rule carries no integrand family; pass spec explicitly")
    if rule.weights is None:
        raise ValueError("weights have not been computed for this rule")
    _warn_if_outside(rule, p)
    h = np.asarray(spec.h(p, rule.magic_points), dtype=float)
    return float(h @ rule.weights)


def _warn_if_outside(rule: MagicRule, p) -> None:
    if rule.box_bounds is None:
        return
    vec = _param_vector(p)
    lo = rule.box_bounds["lo"]
    hi = rule.box_bounds["hi"]
    if len(vec) != len(lo):
        return
    eps = 1e-12
    if any(v < l - eps or v > h + eps for v, l, h in zip(vec, lo, hi)):
        warnings.warn(
            "parameters outside the training cloud's bounding box; result is an extrapolation",
            ExtrapolationWarning,
            stacklevel=3,
        )


def _param_vector(p) -> list[float]:
    """Flatten a parameter point (spot, strike, maturity, q...) to floats."""
    if hasattr(p, "q"):
        spot = p.spot if isinstance(p.spot, tuple) else (p.spot,)
        return [*map(float, spot), float(p.strike), float(p.maturity), *map(float, p.q)]
    return [float(v) for v in np.atleast_1d(np.asarray(p, dtype=float))]


def _cloud_bounds(cloud) -> dict | None:
    try:
        mat = np.array([_param_vector(p) for p in cloud], dtype=float)
    except (TypeError, ValueError):
        return None
    return {"lo": mat.min(axis=0).tolist(), "hi": mat.max(axis=0).tolist()}


# ---------------------------------------------------------------------------
# Persistence.  JSON with full-precision floats (shortest round-trip repr),
# versioned and self-describing.
# ---------------------------------------------------------------------------


def save_rule(rule: MagicRule) -> bytes:
    """Serialize a trained rule; ``load_rule`` restores every field bit-exactly."""
    doc = {
        "format_version": FORMAT_VERSION,
        "model_id": rule.model_id,
        "payoff_id": rule.payoff_id,
        "eta": _jsonable(rule.eta),
        "omega_lo": _jsonable(rule.omega_lo),
        "omega_hi": _jsonable(rule.omega_hi),
        "grid_count": _jsonable(rule.grid_count),
        "M": rule.m,
        "magic_points": rule.magic_points.tolist(),
        "magic_params": [_param_vector(p) for p in rule.magic_params],
        "weights": None if rule.weights is None else rule.weights.tolist(),
        "b_inverse": rule.b_inverse.tolist(),
        "basis": rule.basis.tolist(),
        "residual_history": rule.residual_history.tolist(),
        "rate": rule.rate,
        "created_seed": rule.created_seed,
        "dim": rule.dim,
        "strike": rule.strike,
        "magic_param_indices": rule.magic_param_indices.tolist(),
        "node_indices": rule.node_indices.tolist(),
        "snapshot_coeffs": rule.snapshot_coeffs.tolist(),
        "snapshot_integrals": None if rule.snapshot_integrals is None else rule.snapshot_integrals.tolist(),
        "final_residual": rule.final_residual,
        "converged": rule.converged,
        "degenerate": rule.degenerate,
        "box_bounds": rule.box_bounds,
        "param_fields": [_param_vector_layout(p) for p in rule.magic_params[:1]],
    }
    return json.dumps(doc).encode("utf-8")


def _param_vector_layout(p) -> dict:
    if hasattr(p, "q"):
        d = len(p.spot) if isinstance(p.spot, tuple) else 1
        return {"kind": "param_point", "spot_dim": d, "q_len": len(p.q)}
    return {"kind": "vector"}


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _detuple(v):
    if isinstance(v, list):
        return tuple(v)
    return v


def load_rule(data: bytes | str) -> MagicRule:
    """Rebuild a rule from ``save_rule`` output.

    Raises ``MalformedFileError`` on truncated or inconsistent input and
    ``VersionMismatchError`` on an unsupported format version.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFileError(f"rule file is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"rule file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFileError("rule file must hold a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported rule format version {version!r}")
    try:
        dim = doc["dim"]
        layout = doc.get("param_fields") or [{"kind": "vector"}]
        magic_params = [
            _rebuild_param(vec, layout[0]) for vec in doc["magic_params"]
        ]
        rule = MagicRule(
            m=doc["M"],
            magic_points=np.asarray(doc["magic_points"], dtype=float),
            magic_param_indices=np.asarray(doc["magic_param_indices"], dtype=np.int64),
            magic_params=magic_params,
            node_indices=np.asarray(doc["node_indices"], dtype=np.int64),
            basis=np.asarray(doc["basis"], dtype=float),
            b_inverse=np.asarray(doc["b_inverse"], dtype=float),
            snapshot_coeffs=np.asarray(doc["snapshot_coeffs"], dtype=float),
            residual_history=np.asarray(doc["residual_history"], dtype=float),
            final_residual=doc["final_residual"],
            converged=doc["converged"],
            degenerate=doc["degenerate"],
            eta=_detuple(doc["eta"]),
            omega_lo=_detuple(doc["omega_lo"]),
            omega_hi=_detuple(doc["omega_hi"]),
            grid_count=_detuple(doc["grid_count"]),
            dim=dim,
            model_id=doc["model_id"],
            payoff_id=doc["payoff_id"],
            strike=doc["strike"],
            rate=doc["rate"],
            created_seed=doc["created_seed"],
            box_bounds=doc["box_bounds"],
            weights=None if doc["weights"] is None else np.asarray(doc["weights"], dtype=float),
            snapshot_integrals=(
                None
                if doc["snapshot_integrals"] is None
                else np.asarray(doc["snapshot_integrals"], dtype=float)
            ),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise MalformedFileError(f"rule file is missing fields: {exc}") from exc
    if rule.model_id and rule.payoff_id:
        from .pricing import IntegrandSpec
        from .payoffs import PayoffSpec

        payoff = PayoffSpec(rule.payoff_id, rule.strike, dim=rule.dim)
        rule.spec = IntegrandSpec(payoff=payoff, model=rule.model_id, eta=rule.eta, rate=rule.rate, dim=rule.dim)
    return rule


def _rebuild_param(vec: list, layout: dict):
    if layout.get("kind") == "param_point":
        from .pricing import ParamPoint

        d = layout["spot_dim"]
        spot = tuple(vec[:d]) if d > 1 else vec[0]
        return ParamPoint(spot=spot, strike=vec[d], maturity=vec[d + 1], q=tuple(vec[d + 2:]))
    return tuple(vec)
