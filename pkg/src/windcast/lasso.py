"""Weighted L1-penalized least squares via cyclic coordinate descent.

Solves, over a decreasing regularization grid with warm starts,

    min_beta  sum_t w_t (y_t - x_t' beta)^2 + lam * sum_{j in penalized} |beta_j~|

where ``beta~`` are coefficients on internally rescaled columns: every
column is divided by its weighted root mean square so the penalty is
comparable across regressor families with wildly different units.
Reported coefficients are mapped back to the original scale.  An
optional nonnegativity constraint (used by the scale model) replaces the
soft-threshold update with its one-sided version.

Two interchangeable back ends implement the same updates: a
residual-update kernel that touches one column of X per coordinate
(cheap for small problems) and a covariance-update kernel working on
the Gram matrix X'WX (cheap for many-lambda paths on tall problems,
and the only thing needed from the data, so X can be streamed in row
blocks when it is too large to hold).  Both are compiled with numba
and iterate until every coordinate satisfies its subgradient condition
to a configurable tolerance.

The grid point is chosen by the Akaike information criterion computed
from the weighted residual sum of squares and the active-set size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, DegenerateProblemError, NumericalInputError


@njit(cache=True)
def soft_threshold(rho: float, lam: float) -> float:
    if rho > lam:
        return rho - lam
    if rho < -lam:
        return rho + lam
    return 0.0


@njit(cache=True)
def coordinate_update(rho: float, d: float, lam: float, nonnegative: bool) -> float:
    """One exact coordinate minimizer.

    ``rho`` is twice the weighted correlation of the column with the
    partial residual, ``d`` twice the weighted squared column norm.
    Zero-variance columns stay frozen at zero.
    """
    if d == 0.0:
        return 0.0
    if nonnegative:
        v = (rho - lam) / d
        return v if v > 0.0 else 0.0
    return soft_threshold(rho, lam) / d


@njit(cache=True)
def _kkt_violation(g: np.ndarray, beta: np.ndarray, d: np.ndarray, lam: float,
                   pf: np.ndarray, nonneg: bool) -> float:
    worst = 0.0
    for j in range(g.shape[0]):
        if d[j] == 0.0:
            continue
        lj = lam * pf[j]
        bj = beta[j]
        if nonneg:
            v = abs(g[j] - lj) if bj > 0.0 else max(0.0, g[j] - lj)
        else:
            if bj != 0.0:
                s = 1.0 if bj > 0.0 else -1.0
                v = abs(g[j] - s * lj)
            else:
                v = max(0.0, abs(g[j]) - lj)
        if pf[j] == 0.0:
            v = abs(g[j])
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _sweep_residual(X, r, w, beta, d, lam, pf, nonneg, idx):
    T = X.shape[0]
    maxd = 0.0
    for k in range(idx.shape[0]):
        j = idx[k]
        if d[j] == 0.0:
            continue
        acc = 0.0
        for t in range(T):
            acc += w[t] * X[t, j] * r[t]
        rho = 2.0 * acc + d[j] * beta[j]
        new = coordinate_update(rho, d[j], lam * pf[j], nonneg)
        delta = new - beta[j]
        if delta != 0.0:
            for t in range(T):
                r[t] -= X[t, j] * delta
            beta[j] = new
            ad = abs(delta)
            if ad > maxd:
                maxd = ad
    return maxd


@njit(cache=True)
def _gradient_residual(X, r, w):
    T, V = X.shape
    g = np.zeros(V)
    for j in range(V):
        acc = 0.0
        for t in range(T):
            acc += w[t] * X[t, j] * r[t]
        g[j] = 2.0 * acc
    return g


@njit(cache=True)
def _path_residual(X, y, w, lambdas, pf, nonneg, ctol, kkt_tol, max_sweeps):
    T, V = X.shape
    nl = lambdas.shape[0]
    coefs = np.zeros((nl, V))
    rss = np.zeros(nl)
    kkt = np.zeros(nl)
    sweeps_used = np.zeros(nl, dtype=np.int64)
    beta = np.zeros(V)
    r = y.copy()
    d = np.zeros(V)
    for j in range(V):
        acc = 0.0
        for t in range(T):
            acc += w[t] * X[t, j] * X[t, j]
        d[j] = 2.0 * acc
    all_idx = np.arange(V)
    for li in range(nl):
        lam = lambdas[li]
        sweeps = 0
        prev_obj = np.inf
        while True:
            maxd = _sweep_residual(X, r, w, beta, d, lam, pf, nonneg, all_idx)
            sweeps += 1
            if maxd > ctol and sweeps < max_sweeps:
                active = np.flatnonzero((beta != 0.0) | (pf == 0.0))
                inner = 0
                while sweeps < max_sweeps and inner < 1000:
                    maxd = _sweep_residual(X, r, w, beta, d, lam, pf, nonneg, active)
                    sweeps += 1
                    inner += 1
                    if maxd <= ctol:
                        break
            g = _gradient_residual(X, r, w)
            viol = _kkt_violation(g, beta, d, lam, pf, nonneg)
            if viol <= kkt_tol or sweeps >= max_sweeps:
                break
            acc = 0.0
            for t in range(T):
                acc += w[t] * r[t] * r[t]
            obj = acc
            for j in range(V):
                obj += lam * pf[j] * abs(beta[j])
            # exactly collinear columns cycle without objective progress;
            # stop at the numerical floor of the objective
            if prev_obj - obj <= 1e-12 * max(1.0, abs(obj)):
                break
            prev_obj = obj
        coefs[li] = beta
        acc = 0.0
        for t in range(T):
            acc += w[t] * r[t] * r[t]
        rss[li] = acc
        kkt[li] = viol
        sweeps_used[li] = sweeps
    return coefs, rss, kkt, sweeps_used


@njit(cache=True)
def _refresh_q(G, beta):
    V = G.shape[0]
    q = np.zeros(V)
    for j in range(V):
        bj = beta[j]
        if bj != 0.0:
            for i in range(V):
                q[i] += G[i, j] * bj
    return q


@njit(cache=True)
def _sweep_gram(G, b, q, beta, d, lam, pf, nonneg, idx):
    maxd = 0.0
    for k in range(idx.shape[0]):
        j = idx[k]
        if d[j] == 0.0:
            continue
        rho = 2.0 * (b[j] - q[j]) + d[j] * beta[j]
        new = coordinate_update(rho, d[j], lam * pf[j], nonneg)
        delta = new - beta[j]
        if delta != 0.0:
            for i in range(q.shape[0]):
                q[i] += G[i, j] * delta
            beta[j] = new
            ad = abs(delta)
            if ad > maxd:
                maxd = ad
    return maxd


@njit(cache=True)
def _path_gram(G, b, yy, lambdas, pf, nonneg, ctol, kkt_tol, max_sweeps):
    V = G.shape[0]
    nl = lambdas.shape[0]
    coefs = np.zeros((nl, V))
    rss = np.zeros(nl)
    kkt = np.zeros(nl)
    sweeps_used = np.zeros(nl, dtype=np.int64)
    beta = np.zeros(V)
    d = np.zeros(V)
    for j in range(V):
        d[j] = 2.0 * G[j, j]
    all_idx = np.arange(V)
    q = np.zeros(V)
    for li in range(nl):
        lam = lambdas[li]
        q = _refresh_q(G, beta)
        sweeps = 0
        prev_obj = np.inf
        while True:
            maxd = _sweep_gram(G, b, q, beta, d, lam, pf, nonneg, all_idx)
            sweeps += 1
            if maxd > ctol and sweeps < max_sweeps:
                active = np.flatnonzero((beta != 0.0) | (pf == 0.0))
                inner = 0
                while sweeps < max_sweeps and inner < 1000:
                    maxd = _sweep_gram(G, b, q, beta, d, lam, pf, nonneg, active)
                    sweeps += 1
                    inner += 1
                    if maxd <= ctol:
                        break
            q = _refresh_q(G, beta)
            g = np.empty(V)
            for j in range(V):
                g[j] = 2.0 * (b[j] - q[j])
            viol = _kkt_violation(g, beta, d, lam, pf, nonneg)
            if viol <= kkt_tol or sweeps >= max_sweeps:
                break
            obj = yy
            for j in range(V):
                obj += beta[j] * (q[j] - 2.0 * b[j]) + lam * pf[j] * abs(beta[j])
            # exactly collinear columns cycle without objective progress;
            # stop at the numerical floor of the objective
            if prev_obj - obj <= 1e-12 * max(1.0, abs(obj)):
                break
            prev_obj = obj
        coefs[li] = beta
        acc = yy
        for j in range(V):
            acc += beta[j] * (q[j] - 2.0 * b[j])
        rss[li] = max(acc, 0.0)
        kkt[li] = viol
        sweeps_used[li] = sweeps
    return coefs, rss, kkt, sweeps_used


@dataclass(frozen=True)
class SolverSettings:
    """Grid layout and stopping rules.

    ``kkt_tol`` is absolute; ``kkt_rel`` scales with the problem's
    lambda_max so badly scaled problems (responses in the hundreds)
    terminate at the float64 stationarity floor instead of grinding.
    """

    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    coef_tol: float = 1e-7
    kkt_tol: float = 1e-8
    kkt_rel: float = 1e-10
    max_sweeps: int = 100_000
    mode: str = "auto"  # auto | residual | gram
    gram_mem_cap_bytes: float = 1.5e9

    def to_dict(self) -> dict:
        return {
            "n_lambda": self.n_lambda,
            "lambda_min_ratio": self.lambda_min_ratio,
            "coef_tol": self.coef_tol,
            "kkt_tol": self.kkt_tol,
            "kkt_rel": self.kkt_rel,
            "max_sweeps": self.max_sweeps,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverSettings":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass
class LassoProblem:
    """One penalized regression: data, weights, constraints, grid."""

    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None
    nonnegative: bool = False
    lambda_grid: np.ndarray | None = None
    unpenalized: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        T = self.y.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != T:
            raise ConfigurationError(f"X rows {self.X.shape} do not match y length {T}")
        if T < 2:
            raise ConfigurationError("need at least two rows")
        if self.weights is None:
            self.weights = np.ones(T)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (T,):
            raise ConfigurationError("weights must align with rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))
                and np.all(np.isfinite(self.weights))):
            raise NumericalInputError("non-finite values in problem data")
        if np.any(self.weights < 0):
            raise NumericalInputError("negative weights")
        if not np.any(self.weights > 0):
            raise DegenerateProblemError("all rows have zero weight")
        if self.lambda_grid is not None:
            lg = np.asarray(self.lambda_grid, dtype=float)
            if np.any(lg <= 0) or np.any(np.diff(lg) >= 0):
                raise ConfigurationError("lambda grid must be positive and strictly decreasing")
            self.lambda_grid = lg
        self.unpenalized = frozenset(int(j) for j in self.unpenalized)
        if any(j < 0 or j >= self.X.shape[1] for j in self.unpenalized):
            raise ConfigurationError("unpenalized index out of range")


@dataclass
class LassoFit:
    """Path solution: one coefficient vector per grid point, original scale."""

    lambdas: np.ndarray
    coefs: np.ndarray = field(repr=False)
    rss: np.ndarray = field(repr=False)
    aic: np.ndarray = field(repr=False)
    active_sizes: np.ndarray
    kkt_residuals: np.ndarray = field(repr=False)
    sweeps: np.ndarray = field(repr=False)
    scales: np.ndarray = field(repr=False)
    penalty_factors: np.ndarray = field(repr=False)
    selected_index: int
    lambda_max: float
    n_rows: int
    nonnegative: bool

    @property
    def selected_lambda(self) -> float:
        return float(self.lambdas[self.selected_index])

    @property
    def selected_coefficients(self) -> np.ndarray:
        return self.coefs[self.selected_index]

    def objective(self, index: int, lam: float | None = None) -> float:
        """Penalized objective at a grid point (rescaled-coefficient penalty)."""
        lam = float(self.lambdas[index]) if lam is None else lam
        pen = np.sum(self.penalty_factors * self.scales * np.abs(self.coefs[index]))
        return float(self.rss[index] + lam * pen)


def _column_scales(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    sw = w.sum()
    ms = (w @ (X * X)) / sw
    return np.sqrt(ms)


def select_aic(rss: np.ndarray, active_sizes: np.ndarray, n_rows: int) -> tuple[int, np.ndarray]:
    """Index of the AIC-minimal grid point; ties resolve to the sparser
    (larger) regularization value, which comes first on the descending grid."""
    with np.errstate(divide="ignore"):
        aic = n_rows * np.log(np.maximum(rss / n_rows, 1e-300)) + 2.0 * active_sizes
    return int(np.argmin(aic)), aic


def _lambda_grid(lam_max: float, settings: SolverSettings) -> np.ndarray:
    lam_max = lam_max * (1.0 + 1e-12)  # keep the first solution exactly zero
    return np.geomspace(lam_max, lam_max * settings.lambda_min_ratio, settings.n_lambda)


def _lambda_max_from_g(g0: np.ndarray, pf: np.ndarray, nonnegative: bool) -> float:
    gp = g0[pf > 0]
    if gp.size == 0:
        return 1.0
    lam = float(np.max(gp) if nonnegative else np.max(np.abs(gp)))
    if not np.isfinite(lam) or lam <= 0:
        return 1.0
    return lam


def solve_path(problem: LassoProblem, settings: SolverSettings = SolverSettings()) -> LassoFit:
    """Solve the full regularization path for one problem.

    Chooses the residual-update or Gram back end (``settings.mode``),
    computes the grid from the smallest all-zero regularization level
    when no grid is supplied, and returns the path with its AIC-selected
    point.
    """
    X, y, w = problem.X, problem.y, problem.weights
    T, V = X.shape
    scales = _column_scales(X, w)
    if not np.any(scales > 0):
        raise DegenerateProblemError("every column has zero weighted variance")
    inv = np.where(scales > 0, 1.0 / np.where(scales > 0, scales, 1.0), 0.0)
    pf = np.ones(V)
    for j in problem.unpenalized:
        pf[j] = 0.0

    mode = settings.mode
    if mode == "auto":
        mode = "gram" if V * V * 8 <= settings.gram_mem_cap_bytes and T >= 4 else "residual"

    if mode == "gram":
        sqw = np.sqrt(w)
        A = X * sqw[:, None]
        G = A.T @ A
        b = A.T @ (sqw * y)
        yy = float(w @ (y * y))
        G *= inv[:, None]
        G *= inv[None, :]
        b = b * inv
        fit = solve_path_gram(
            G, b, yy, T, problem=problem, settings=settings, scales=scales, pf=pf
        )
        return fit

    Xs = X * inv[None, :]
    g0 = _gradient_at_zero_residual(Xs, y, w, pf)
    lam_max = _lambda_max_from_g(g0, pf, problem.nonnegative)
    grid = problem.lambda_grid if problem.lambda_grid is not None else _lambda_grid(lam_max, settings)
    kkt_eff = max(settings.kkt_tol, settings.kkt_rel * lam_max)
    coefs_s, rss, kkt, sweeps = _path_residual(
        np.ascontiguousarray(Xs), y.copy(), w, np.asarray(grid, dtype=float), pf,
        problem.nonnegative, settings.coef_tol, kkt_eff, settings.max_sweeps,
    )
    return _package(coefs_s, rss, kkt, sweeps, grid, scales, inv, pf, T, lam_max, problem)


def _gradient_at_zero_residual(Xs, y, w, pf) -> np.ndarray:
    r = y
    if np.any(pf == 0.0):
        unp = np.flatnonzero(pf == 0.0)
        sqw = np.sqrt(w)
        bu, *_ = np.linalg.lstsq(Xs[:, unp] * sqw[:, None], sqw * y, rcond=None)
        r = y - Xs[:, unp] @ bu
    return 2.0 * (Xs.T @ (w * r))


def solve_path_gram(
    G: np.ndarray,
    b: np.ndarray,
    yy: float,
    n_rows: int,
    problem: LassoProblem | None = None,
    settings: SolverSettings = SolverSettings(),
    scales: np.ndarray | None = None,
    pf: np.ndarray | None = None,
    nonnegative: bool | None = None,
    lambda_grid: np.ndarray | None = None,
) -> LassoFit:
    """Path solve from precomputed (already column-rescaled) Gram moments.

    ``G`` is X~'WX~, ``b`` is X~'Wy and ``yy`` is y'Wy; callers that
    stream row blocks only ever need to accumulate these.  When
    ``scales`` is omitted the columns are assumed to be on their
    original scale already (scales of one).
    """
    V = G.shape[0]
    nonneg = problem.nonnegative if problem is not None else bool(nonnegative)
    if pf is None:
        pf = np.ones(V)
        if problem is not None:
            for j in problem.unpenalized:
                pf[j] = 0.0
    if scales is None:
        scales = np.ones(V)
    inv = np.where(scales > 0, 1.0 / np.where(scales > 0, scales, 1.0), 0.0)

    g0 = 2.0 * b
    if np.any(pf == 0.0):
        unp = np.flatnonzero(pf == 0.0)
        Gu = G[np.ix_(unp, unp)]
        bu = np.linalg.lstsq(Gu, b[unp], rcond=None)[0]
        g0 = 2.0 * (b - G[:, unp] @ bu)
    lam_max = _lambda_max_from_g(g0, pf, nonneg)
    if lambda_grid is None and problem is not None:
        lambda_grid = problem.lambda_grid
    grid = lambda_grid if lambda_grid is not None else _lambda_grid(lam_max, settings)
    kkt_eff = max(settings.kkt_tol, settings.kkt_rel * lam_max)
    coefs_s, rss, kkt, sweeps = _path_gram(
        np.ascontiguousarray(G), np.asarray(b, dtype=float), float(yy),
        np.asarray(grid, dtype=float), pf, nonneg,
        settings.coef_tol, kkt_eff, settings.max_sweeps,
    )
    return _package(coefs_s, rss, kkt, sweeps, grid, scales, inv, pf, n_rows, lam_max, problem,
                    nonneg=nonneg)


def _package(coefs_s, rss, kkt, sweeps, grid, scales, inv, pf, n_rows, lam_max, problem,
             nonneg: bool | None = None) -> LassoFit:
    coefs = coefs_s * inv[None, :]
    active = np.count_nonzero(coefs_s, axis=1)
    sel, aic = select_aic(rss, active, n_rows)
    return LassoFit(
        lambdas=np.asarray(grid, dtype=float),
        coefs=coefs,
        rss=rss,
        aic=aic,
        active_sizes=active,
        kkt_residuals=kkt,
        sweeps=sweeps,
        scales=scales,
        penalty_factors=pf,
        selected_index=sel,
        lambda_max=lam_max,
        n_rows=n_rows,
        nonnegative=problem.nonnegative if problem is not None else bool(nonneg),
    )
