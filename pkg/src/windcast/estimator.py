"""Iteratively re-weighted LASSO estimation of the full model.

One fit alternates between five steps until the conditional-scale path
stabilizes:

(1) start with unit weights, iteration counter 1;
(2) per equation, solve the weighted mean-model LASSO path and pick the
    regularization level by AIC;
(3) per equation, regress the absolute mean residual on the scale
    design under a nonnegativity constraint (again LASSO + AIC);
(4) turn the fitted scale path into weights, one over sigma squared;
(5) stop when the root-mean-square change of the fitted scale across
    consecutive iterations drops below the tolerance, else go to (2).

Equations are estimated independently within an iteration.  The wind
equations (targets 4..6) share one design matrix and, while weights are
still uniform, one Gram matrix; the pressure designs are column subsets
of the wind design, so the first iteration costs a single Gram
accumulation in total.

The fitted scale is evaluated over every residual row: rows whose shock
history reaches before the sample start take zero for the unavailable
shocks, so all rows carry weights while the scale LASSO itself is fit
only on rows with a complete history.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg.blas import dsyrk

from . import design as dsg
from .basis import BasisPair, build_basis_block
from .design import (
    ColumnCatalog,
    Design,
    LagConfig,
    build_mean_catalog,
    build_mean_design,
    build_variance_catalog,
    fill_mean_columns,
    fill_variance_columns,
)
from .errors import (
    ConfigurationError,
    DegenerateProblemError,
    InsufficientDataError,
)
from .lasso import LassoFit, LassoProblem, SolverSettings, solve_path, solve_path_gram
from .timeseries import StateMatrix, ThresholdSet, empirical_thresholds

MODEL_FORMAT = "windcast-model-v1"


@dataclass(frozen=True)
class EstimatorSettings:
    """Knobs of the re-weighting loop; defaults follow the estimation scheme.

    With ``penalize_intercept`` off (the default), mean designs are
    centered by their weighted column means before the solve and the
    plain constant is recovered afterwards from the weighted response
    mean, i.e. the constant is effectively unpenalized.  Mean-reverting
    series with large levels (air pressure) make the uncentered design
    catastrophically ill-conditioned, so the penalized-constant mode is
    only advisable for data that is already centered.
    """

    max_iterations: int = 20
    delta_tol: float = 1e-3
    sigma_floor_scale: float = 1e-6
    refit_lambda_each_iteration: bool = True
    penalize_intercept: bool = False
    solver: SolverSettings = field(default_factory=SolverSettings)
    keep_iteration_history: bool = False

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "delta_tol": self.delta_tol,
            "sigma_floor_scale": self.sigma_floor_scale,
            "refit_lambda_each_iteration": self.refit_lambda_each_iteration,
            "penalize_intercept": self.penalize_intercept,
            "solver": self.solver.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSettings":
        d = dict(d)
        solver = SolverSettings.from_dict(d.pop("solver", {}))
        return cls(solver=solver, **{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass
class EquationFit:
    """Sparse mean and scale coefficients for one target equation."""

    mean_columns: np.ndarray
    mean_values: np.ndarray
    mean_lambda: float
    variance_columns: np.ndarray
    variance_values: np.ndarray
    variance_lambda: float
    sigma_floor: float
    failed: bool = False
    message: str = ""


@dataclass
class FittedModel:
    """Everything a forecast needs, plus fit-time audit trails.

    ``resid``, ``sigma``, ``eta`` and ``weights`` are T x 6 arrays over
    the training rows with NaN in the first ``mean_start`` rows, which
    precede the estimation sample.
    """

    cfg: LagConfig
    basis: BasisPair
    thresholds: ThresholdSet
    t0: int
    n_rows: int
    equations: list[EquationFit]
    delta_trace: list[float]
    n_iterations: int
    converged: bool
    settings: EstimatorSettings
    resid: np.ndarray | None = field(default=None, repr=False)
    sigma: np.ndarray | None = field(default=None, repr=False)
    eta: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)
    iteration_history: list | None = field(default=None, repr=False)
    _catalogs: dict = field(default_factory=dict, repr=False)

    @property
    def mean_start(self) -> int:
        return self.cfg.max_mean_lag

    @property
    def var_lag(self) -> int:
        return self.cfg.max_var_lag

    @property
    def train_end(self) -> int:
        """Absolute ten-minute index one past the last training row."""
        return self.t0 + self.n_rows

    def mean_catalog(self, equation: int) -> ColumnCatalog:
        key = ("mean", equation)
        if key not in self._catalogs:
            self._catalogs[key] = build_mean_catalog(self.cfg, self.basis, equation)
        return self._catalogs[key]

    def variance_catalog(self, equation: int) -> ColumnCatalog:
        key = ("var", equation)
        if key not in self._catalogs:
            self._catalogs[key] = build_variance_catalog(self.cfg, self.basis, equation)
        return self._catalogs[key]

    def is_attached(self) -> bool:
        return self.resid is not None

    # -- canonical path evaluation ------------------------------------------------

    def compute_residuals(self, states: StateMatrix) -> np.ndarray:
        """Mean-model residuals over all rows of ``states`` with full lag history.

        Returns a T x 6 array, NaN for the first ``mean_start`` rows.
        This is the single evaluation path used at fit time, after
        deserialization, and when extending to out-of-sample data, so
        repeated calls on identical inputs agree bitwise.
        """
        T = states.T
        L = self.mean_start
        if T <= L:
            raise InsufficientDataError(f"need more than {L} rows, got {T}")
        block = build_basis_block(
            T - L, self.basis.k1, self.basis.k2, self.basis.s1, self.basis.s2,
            offset=states.t0 + L,
        )
        pm = block.pair_matrix
        rows = np.arange(L, T)
        out = np.full((T, 6), np.nan)
        for m in range(6):
            eq = self.equations[m]
            cat = self.mean_catalog(m)
            Xa = fill_mean_columns(
                states.values, self.thresholds, pm, cat, eq.mean_columns, rows
            )
            out[L:, m] = states.values[L:, m] - Xa @ eq.mean_values
        return out

    def compute_sigma(self, resid: np.ndarray, t0: int) -> np.ndarray:
        """Fitted conditional scale for a residual matrix (NaN head allowed)."""
        valid = ~np.isnan(resid[:, 0])
        start = int(np.argmax(valid)) if valid.any() else resid.shape[0]
        eps = resid[start:]
        block = build_basis_block(
            eps.shape[0], self.basis.k1, self.basis.k2, self.basis.s1, self.basis.s2,
            offset=t0 + start,
        )
        pm = block.pair_matrix
        out = np.full_like(resid, np.nan)
        for m in range(6):
            eq = self.equations[m]
            cat = self.variance_catalog(m)
            Xv = fill_variance_columns(eps[:, m], pm, cat, eq.variance_columns)
            out[start:, m] = np.maximum(Xv @ eq.variance_values, eq.sigma_floor)
        return out

    def attach(self, states: StateMatrix) -> "FittedModel":
        """Recompute residual, scale, and weight paths from training data."""
        if states.T != self.n_rows or states.t0 != self.t0:
            raise ConfigurationError(
                f"states (T={states.T}, t0={states.t0}) do not match the model"
                f" (T={self.n_rows}, t0={self.t0})"
            )
        self.resid = self.compute_residuals(states)
        self.sigma = self.compute_sigma(self.resid, states.t0)
        self.eta = self.resid / self.sigma
        self.weights = 1.0 / np.square(self.sigma)
        return self

    def residual_pool(self) -> np.ndarray:
        """In-sample standardized residual rows used for bootstrap resampling."""
        if self.eta is None:
            raise ConfigurationError("model is not attached to its training data")
        pool = self.eta[~np.isnan(self.eta[:, 0])]
        if pool.shape[0] == 0:
            raise DegenerateProblemError("empty standardized-residual pool")
        return pool


def _symmetrize_upper(G: np.ndarray) -> np.ndarray:
    return G + np.triu(G, 1).T


def _gram(A: np.ndarray) -> np.ndarray:
    """A'A via the symmetric rank-k BLAS update (upper triangle), symmetrized.

    ``A.T`` of a C-contiguous matrix is Fortran-contiguous, so no copy is made.
    """
    return _symmetrize_upper(dsyrk(1.0, np.ascontiguousarray(A).T, trans=0, lower=0))


def _pressure_column_subset(catalog: ColumnCatalog) -> np.ndarray:
    """Wind-design columns that form the pressure design, in catalog order."""
    return np.flatnonzero(
        (catalog.source < 0) | (catalog.source < 3)
    )


@dataclass
class _GramPack:
    G: np.ndarray
    scales: np.ndarray
    sum_w: float
    col_means: np.ndarray | None  # weighted means when centered, else None

    def subset(self, cols: np.ndarray) -> "_GramPack":
        return _GramPack(
            G=self.G[np.ix_(cols, cols)],
            scales=self.scales[cols],
            sum_w=self.sum_w,
            col_means=None if self.col_means is None else self.col_means[cols],
        )


def _scaled_gram(X: np.ndarray, w: np.ndarray | None, center: bool) -> _GramPack:
    """Weighted Gram moments, optionally centered, columns scaled to unit RMS.

    Centering happens on the accumulated moments (G - sw * mean mean'),
    so a streamed accumulation needs no second pass.  The all-ones
    constant column centers to zero variance and is frozen by its zero
    scale; its coefficient is recovered from the response mean later.
    """
    if w is None:
        G = _gram(X)
        sum_w = float(X.shape[0])
        colsum = X.sum(axis=0)
    else:
        A = X * np.sqrt(w)[:, None]
        G = _gram(A)
        sum_w = float(w.sum())
        colsum = w @ X
    col_means = None
    if center:
        col_means = colsum / sum_w
        G -= sum_w * np.outer(col_means, col_means)
        np.maximum(np.einsum("ii->i", G), 0.0, out=np.einsum("ii->i", G))
    scales = np.sqrt(np.einsum("ii->i", G) / sum_w)
    inv = np.where(scales > 0, 1.0 / np.where(scales > 0, scales, 1.0), 0.0)
    G *= inv[:, None]
    G *= inv[None, :]
    return _GramPack(G=G, scales=scales, sum_w=sum_w, col_means=col_means)


def _solve_mean_gram(
    pack: _GramPack, X: np.ndarray, y: np.ndarray, w: np.ndarray | None,
    settings: EstimatorSettings, lambda_grid=None,
) -> LassoFit:
    if w is None:
        b = X.T @ y
        yy = float(y @ y)
    else:
        b = X.T @ (w * y)
        yy = float(w @ (y * y))
    inv = np.where(pack.scales > 0, 1.0 / np.where(pack.scales > 0, pack.scales, 1.0), 0.0)
    ybar = 0.0
    if pack.col_means is not None:
        ybar = float(y.sum() / pack.sum_w) if w is None else float((w @ y) / pack.sum_w)
        b = b - pack.sum_w * ybar * pack.col_means
        yy = max(yy - pack.sum_w * ybar * ybar, 0.0)
    fit = solve_path_gram(
        pack.G, b * inv, yy, X.shape[0],
        settings=settings.solver, scales=pack.scales,
        nonnegative=False, lambda_grid=lambda_grid,
    )
    if pack.col_means is not None:
        # constant column (index 0) was centered away; recover it so the
        # coefficient vector reproduces uncentered responses directly
        fit.coefs[:, 0] = ybar - fit.coefs[:, 1:] @ pack.col_means[1:]
    return fit


def fit(
    states: StateMatrix,
    cfg: LagConfig,
    basis: BasisPair | None = None,
    settings: EstimatorSettings | None = None,
) -> FittedModel:
    """Run the full re-weighted estimation loop on a state history."""
    basis = basis or BasisPair()
    settings = settings or EstimatorSettings()
    T = states.T
    L = cfg.max_mean_lag
    Lv = cfg.max_var_lag
    if T <= L + Lv + 10:
        raise InsufficientDataError(
            f"T={T} insufficient for mean lag {L} plus shock lag {Lv}"
        )
    thresholds = (
        empirical_thresholds(states, cfg.alphas)
        if cfg.j2
        else ThresholdSet(alphas=(), values=np.zeros((6, 0)))
    )
    block = build_basis_block(T, basis.k1, basis.k2, basis.s1, basis.s2, offset=states.t0)
    wind = build_mean_design(states, thresholds, block, cfg, equation=3)
    wind_cat = wind.catalog
    pcols = _pressure_column_subset(wind_cat)
    Xw = wind.X
    Xp = np.ascontiguousarray(Xw[:, pcols])
    ys = [states.values[L:, m] for m in range(6)]
    pm_res = block.pair_matrix[L:]
    n_res = T - L

    var_catalogs = [build_variance_catalog(cfg, basis, m) for m in range(6)]

    sigma_prev: np.ndarray | None = None
    weights = [None] * 6  # None means unit weights
    delta_trace: list[float] = []
    history: list[dict] = [] if settings.keep_iteration_history else None
    mean_fits: list[LassoFit | None] = [None] * 6
    var_fits: list[LassoFit | None] = [None] * 6
    mean_lambda_pin: list[np.ndarray | None] = [None] * 6
    var_lambda_pin: list[np.ndarray | None] = [None] * 6
    failed = [False] * 6
    fail_msg = [""] * 6
    converged = False
    K = 0

    while K < settings.max_iterations:
        K += 1
        resid = np.empty((n_res, 6))
        # -- step (2): mean LASSO per equation -------------------------------
        shared_packs: dict[str, _GramPack] = {}
        center = not settings.penalize_intercept
        if all(w is None for w in weights):
            packw = _scaled_gram(Xw, None, center)
            shared_packs["wind"] = packw
            shared_packs["pressure"] = packw.subset(pcols)
        for m in range(6):
            if failed[m]:
                resid[:, m] = ys[m]
                continue
            X = Xp if m < 3 else Xw
            group = "pressure" if m < 3 else "wind"
            try:
                pack = shared_packs.get(group) or _scaled_gram(X, weights[m], center)
                fitm = _solve_mean_gram(
                    pack, X, ys[m], weights[m], settings,
                    lambda_grid=mean_lambda_pin[m],
                )
            except DegenerateProblemError as exc:
                failed[m] = True
                fail_msg[m] = f"mean step: {exc}"
                resid[:, m] = ys[m]
                continue
            mean_fits[m] = fitm
            coef = fitm.selected_coefficients
            act = np.flatnonzero(coef)
            resid[:, m] = ys[m] - X[:, act] @ coef[act]
            if not settings.refit_lambda_each_iteration and mean_lambda_pin[m] is None:
                mean_lambda_pin[m] = np.array([fitm.selected_lambda])
        # -- step (3): scale LASSO on absolute residuals ---------------------
        sigma = np.empty((n_res, 6))
        for m in range(6):
            if failed[m]:
                sigma[:, m] = 1.0
                continue
            Xv = dsg._variance_matrix(resid[:, m], pm_res, cfg, basis.n_pairs)
            abs_eps = np.abs(resid[Lv:, m])
            floor = max(float(settings.sigma_floor_scale * abs_eps.std()), 1e-12)
            try:
                fitv = solve_path(
                    LassoProblem(
                        X=Xv[Lv:], y=abs_eps, nonnegative=True,
                        lambda_grid=var_lambda_pin[m],
                    ),
                    settings.solver,
                )
            except DegenerateProblemError as exc:
                failed[m] = True
                fail_msg[m] = f"scale step: {exc}"
                sigma[:, m] = 1.0
                continue
            var_fits[m] = fitv
            coefv = fitv.selected_coefficients
            actv = np.flatnonzero(coefv)
            sigma[:, m] = np.maximum(Xv[:, actv] @ coefv[actv], floor)
            if not settings.refit_lambda_each_iteration and var_lambda_pin[m] is None:
                var_lambda_pin[m] = np.array([fitv.selected_lambda])
        # -- step (4): re-weight ----------------------------------------------
        for m in range(6):
            weights[m] = None if failed[m] else 1.0 / np.square(sigma[:, m])
        if history is not None:
            history.append(
                {
                    "sigma": sigma.copy(),
                    "weights": [None if w is None else w.copy() for w in weights],
                    "mean_lambdas": [f.selected_lambda if f else np.nan for f in mean_fits],
                    "var_lambdas": [f.selected_lambda if f else np.nan for f in var_fits],
                }
            )
        # -- step (5): abort criterion on the scale path ----------------------
        if sigma_prev is not None:
            delta = float(np.sqrt(np.mean(np.square(sigma - sigma_prev))))
            delta_trace.append(delta)
            if delta < settings.delta_tol:
                converged = True
                sigma_prev = sigma
                break
        sigma_prev = sigma

    if not converged:
        warnings.warn(
            f"re-weighting loop stopped at max_iterations={settings.max_iterations}"
            f" with delta={delta_trace[-1] if delta_trace else float('nan')}",
            stacklevel=2,
        )

    equations = []
    for m in range(6):
        if failed[m] or mean_fits[m] is None or var_fits[m] is None:
            equations.append(
                EquationFit(
                    mean_columns=np.zeros(0, dtype=np.int64),
                    mean_values=np.zeros(0),
                    mean_lambda=float("nan"),
                    variance_columns=np.zeros(0, dtype=np.int64),
                    variance_values=np.zeros(0),
                    variance_lambda=float("nan"),
                    sigma_floor=1.0,
                    failed=True,
                    message=fail_msg[m] or "no successful iteration",
                )
            )
            continue
        coef = mean_fits[m].selected_coefficients
        act = np.flatnonzero(coef)
        coefv = var_fits[m].selected_coefficients
        actv = np.flatnonzero(coefv)
        abs_eps_std = float(np.abs(resid[Lv:, m]).std())
        equations.append(
            EquationFit(
                mean_columns=act,
                mean_values=coef[act],
                mean_lambda=mean_fits[m].selected_lambda,
                variance_columns=actv,
                variance_values=coefv[actv],
                variance_lambda=var_fits[m].selected_lambda,
                sigma_floor=max(settings.sigma_floor_scale * abs_eps_std, 1e-12),
            )
        )

    model = FittedModel(
        cfg=cfg,
        basis=basis,
        thresholds=thresholds,
        t0=states.t0,
        n_rows=T,
        equations=equations,
        delta_trace=delta_trace,
        n_iterations=K,
        converged=converged,
        settings=settings,
        iteration_history=history,
    )
    model.attach(states)
    return model


def model_from_coefficients(
    cfg: LagConfig,
    basis: BasisPair,
    thresholds: ThresholdSet,
    t0: int,
    n_rows: int,
    mean_records: list[dict],
    variance_records: list[dict],
    sigma_floors: np.ndarray | None = None,
    settings: EstimatorSettings | None = None,
) -> FittedModel:
    """Assemble a model from explicit coefficient records.

    Records are dicts with keys family, equation (1-based), source
    (1-based or None), lag, i1, i2, alpha, value; the same shape the
    JSON serialization uses.  Used by the loader and by simulation
    studies that need a model with known coefficients.
    """
    settings = settings or EstimatorSettings()
    floors = np.full(6, 1e-12) if sigma_floors is None else np.asarray(sigma_floors, float)
    per_eq_mean: list[list[tuple[int, float]]] = [[] for _ in range(6)]
    per_eq_var: list[list[tuple[int, float]]] = [[] for _ in range(6)]
    mean_cats = [build_mean_catalog(cfg, basis, m) for m in range(6)]
    var_cats = [build_variance_catalog(cfg, basis, m) for m in range(6)]
    for rec in mean_records:
        m = int(rec["equation"]) - 1
        key = (rec["family"], rec.get("source"), rec.get("lag"),
               rec.get("i1"), rec.get("i2"), rec.get("alpha"))
        per_eq_mean[m].append((mean_cats[m].index_of(key), float(rec["value"])))
    for rec in variance_records:
        m = int(rec["equation"]) - 1
        src = rec.get("source")
        key = (rec["family"], src, rec.get("lag"), rec.get("i1"), rec.get("i2"),
               rec.get("alpha"))
        per_eq_var[m].append((var_cats[m].index_of(key), float(rec["value"])))
    equations = []
    for m in range(6):
        mean_sorted = sorted(per_eq_mean[m])
        var_sorted = sorted(per_eq_var[m])
        equations.append(
            EquationFit(
                mean_columns=np.array([i for i, _ in mean_sorted], dtype=np.int64),
                mean_values=np.array([v for _, v in mean_sorted]),
                mean_lambda=float("nan"),
                variance_columns=np.array([i for i, _ in var_sorted], dtype=np.int64),
                variance_values=np.array([v for _, v in var_sorted]),
                variance_lambda=float("nan"),
                sigma_floor=float(floors[m]),
            )
        )
    return FittedModel(
        cfg=cfg,
        basis=basis,
        thresholds=thresholds,
        t0=t0,
        n_rows=n_rows,
        equations=equations,
        delta_trace=[],
        n_iterations=0,
        converged=True,
        settings=settings,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _records_for(model: FittedModel, m: int, kind: str) -> list[dict]:
    eq = model.equations[m]
    cat = model.mean_catalog(m) if kind == "mean" else model.variance_catalog(m)
    cols = eq.mean_columns if kind == "mean" else eq.variance_columns
    vals = eq.mean_values if kind == "mean" else eq.variance_values
    records = []
    for c, v in zip(cols, vals):
        s = cat.spec(int(c))
        records.append(
            {
                "family": s.family,
                "equation": s.equation,
                "source": s.source,
                "lag": s.lag,
                "i1": s.i1,
                "i2": s.i2,
                "alpha": s.alpha,
                "value": float(v),
            }
        )
    return records


def model_to_dict(model: FittedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "config": {
            "lags": model.cfg.to_dict(),
            "basis": model.basis.to_dict(),
            "estimator": model.settings.to_dict(),
        },
        "t0": model.t0,
        "n_rows": model.n_rows,
        "thresholds": {
            "alphas": list(model.thresholds.alphas),
            "values": model.thresholds.values.tolist(),
        },
        "iterations": model.n_iterations,
        "converged": model.converged,
        "delta_trace": list(model.delta_trace),
        "equations": [
            {
                "failed": model.equations[m].failed,
                "message": model.equations[m].message,
                "mean_lambda": float(model.equations[m].mean_lambda),
                "variance_lambda": float(model.equations[m].variance_lambda),
                "sigma_floor": float(model.equations[m].sigma_floor),
                "mean": _records_for(model, m, "mean"),
                "variance": _records_for(model, m, "variance"),
            }
            for m in range(6)
        ],
    }


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)


def model_hash(model: FittedModel) -> str:
    return hashlib.sha256(canonical_json(model_to_dict(model)).encode()).hexdigest()


def save_model(model: FittedModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(model_to_dict(model)))
        fh.write("\n")


def model_from_dict(doc: dict) -> FittedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ConfigurationError(f"unknown model format {doc.get('format')!r}")
    cfg = LagConfig.from_dict(doc["config"]["lags"])
    basis = BasisPair.from_dict(doc["config"]["basis"])
    settings = EstimatorSettings.from_dict(doc["config"]["estimator"])
    thr = doc["thresholds"]
    thresholds = ThresholdSet(
        alphas=tuple(float(a) for a in thr["alphas"]),
        values=np.array(thr["values"], dtype=float).reshape(6, -1),
    )
    mean_records: list[dict] = []
    var_records: list[dict] = []
    floors = np.empty(6)
    for m, eqdoc in enumerate(doc["equations"]):
        floors[m] = eqdoc["sigma_floor"]
        mean_records.extend(eqdoc["mean"])
        var_records.extend(eqdoc["variance"])
    model = model_from_coefficients(
        cfg, basis, thresholds, int(doc["t0"]), int(doc["n_rows"]),
        mean_records, var_records, sigma_floors=floors, settings=settings,
    )
    model.delta_trace = [float(d) for d in doc["delta_trace"]]
    model.n_iterations = int(doc["iterations"])
    model.converged = bool(doc["converged"])
    for m, eqdoc in enumerate(doc["equations"]):
        model.equations[m].failed = bool(eqdoc["failed"])
        model.equations[m].message = eqdoc.get("message", "")
        model.equations[m].mean_lambda = float(eqdoc["mean_lambda"])
        model.equations[m].variance_lambda = float(eqdoc["variance_lambda"])
    return model


def load_model(path) -> FittedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Residual diagnostics
# ---------------------------------------------------------------------------


def acf(x: np.ndarray, n_lags: int) -> np.ndarray:
    """Sample autocorrelation r_0..r_nlags with the 1/T normalization."""
    x = np.asarray(x, float)
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        return np.zeros(n_lags + 1)
    return np.array([1.0] + [float(xc[k:] @ xc[:-k]) / denom for k in range(1, n_lags + 1)])


def ccf(x: np.ndarray, y: np.ndarray, n_lags: int) -> np.ndarray:
    """Cross-correlation of x_t with y_{t+k} for k = -n_lags..n_lags."""
    x = np.asarray(x, float) - np.mean(x)
    y = np.asarray(y, float) - np.mean(y)
    n = x.shape[0]
    denom = n * x.std() * y.std()
    if denom == 0.0:
        return np.zeros(2 * n_lags + 1)
    out = np.empty(2 * n_lags + 1)
    for i, k in enumerate(range(-n_lags, n_lags + 1)):
        if k >= 0:
            out[i] = float(x[: n - k] @ y[k:]) / denom
        else:
            out[i] = float(x[-k:] @ y[: n + k]) / denom
    return out


@dataclass
class DiagnosticsReport:
    """ACF of standardized residuals and their absolute values, per equation."""

    n_lags: int
    band: float
    acf_eta: np.ndarray          # 6 x (n_lags + 1)
    acf_abs_eta: np.ndarray      # 6 x (n_lags + 1)
    frac_outside_eta: np.ndarray
    frac_outside_abs: np.ndarray
    ccf_pressure_speed: np.ndarray  # lags -n_lags..n_lags

    def to_dict(self) -> dict:
        return {
            "n_lags": self.n_lags,
            "band": self.band,
            "acf_eta": self.acf_eta.tolist(),
            "acf_abs_eta": self.acf_abs_eta.tolist(),
            "frac_outside_eta": self.frac_outside_eta.tolist(),
            "frac_outside_abs": self.frac_outside_abs.tolist(),
            "ccf_pressure_speed": self.ccf_pressure_speed.tolist(),
        }


def residual_diagnostics(model: FittedModel, n_lags: int = 200) -> DiagnosticsReport:
    """Whiteness checks on eta = residual / fitted scale."""
    if model.eta is None:
        raise ConfigurationError("model is not attached to its training data")
    eta = model.eta[~np.isnan(model.eta[:, 0])]
    n = eta.shape[0]
    n_lags = min(n_lags, n - 2)
    band = 1.96 / np.sqrt(n)
    acf_eta = np.stack([acf(eta[:, m], n_lags) for m in range(6)])
    acf_abs = np.stack([acf(np.abs(eta[:, m]), n_lags) for m in range(6)])
    frac_eta = (np.abs(acf_eta[:, 1:]) > band).mean(axis=1)
    frac_abs = (np.abs(acf_abs[:, 1:]) > band).mean(axis=1)
    return DiagnosticsReport(
        n_lags=n_lags,
        band=float(band),
        acf_eta=acf_eta,
        acf_abs_eta=acf_abs,
        frac_outside_eta=frac_eta,
        frac_outside_abs=frac_abs,
        ccf_pressure_speed=ccf(eta[:, 0], eta[:, 3], n_lags),
    )
