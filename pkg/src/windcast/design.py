"""Regressor-matrix assembly for the mean and scale models.

Each of the six target equations gets its own design.  A mean-model row
at time t holds, in a fixed documented order:

* the periodic intercept expansion (k1*k2 columns, plain term first),
* for every mean lag j1 and every allowed source component m, the
  lagged state value and its periodic expansion products,
* for every threshold lag j2, percentile level alpha, and allowed
  source m, ``max(state[t - j2, m], c(m, alpha))`` and its expansion
  products.

"Allowed" encodes the masking rule: pressure-side equations (targets
1..3) only see pressure-side sources, wind-side equations (targets
4..6) see everything.

The scale-model (conditional standard deviation) design regresses the
absolute residual on its own equation's lagged shocks split by sign,
with the negative branch negated so every regressor is nonnegative and
a nonnegative coefficient vector yields a nonnegative fitted scale.

Every column carries catalog metadata (family, target equation, source,
lag, basis indices, percentile level), and the catalog is enumerable
without materializing any matrix, which keeps full-scale column
accounting cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisBlock, BasisPair
from .errors import ConfigurationError, InsufficientDataError, NumericalInputError
from .timeseries import DEFAULT_ALPHAS, StateMatrix, ThresholdSet

# Column families.
F_INTERCEPT = "intercept-periodic"
F_AR = "ar"
F_AR_PER = "ar-periodic"
F_THRESH = "threshold"
F_THRESH_PER = "threshold-periodic"
F_ARCH_POS = "arch-pos"
F_ARCH_POS_PER = "arch-pos-periodic"
F_ARCH_NEG = "arch-neg"
F_ARCH_NEG_PER = "arch-neg-periodic"
F_VAR_INTERCEPT = "variance-intercept-periodic"

FAMILIES = (
    F_INTERCEPT,
    F_AR,
    F_AR_PER,
    F_THRESH,
    F_THRESH_PER,
    F_ARCH_POS,
    F_ARCH_POS_PER,
    F_ARCH_NEG,
    F_ARCH_NEG_PER,
    F_VAR_INTERCEPT,
)
_FCODE = {name: i for i, name in enumerate(FAMILIES)}

_DEFAULT_J1 = tuple(range(1, 501)) + (576, 720, 864, 1008)
_DEFAULT_J2 = (1, 2, 4, 9, 18, 36, 72, 144)
_DEFAULT_PQ = tuple(range(1, 41)) + tuple(range(140, 151))


def _check_lags(name: str, lags) -> tuple[int, ...]:
    lags = tuple(int(v) for v in lags)
    if any(v <= 0 for v in lags):
        raise ConfigurationError(f"{name} lags must be positive, got {lags}")
    if len(set(lags)) != len(lags):
        raise ConfigurationError(f"{name} lags contain duplicates")
    if any(b <= a for a, b in zip(lags, lags[1:])):
        raise ConfigurationError(f"{name} lags must be sorted ascending")
    return lags


@dataclass(frozen=True)
class LagConfig:
    """Lag sets and percentile levels for both model parts."""

    j1: tuple[int, ...] = _DEFAULT_J1
    j2: tuple[int, ...] = _DEFAULT_J2
    p: tuple[int, ...] = _DEFAULT_PQ
    q: tuple[int, ...] = _DEFAULT_PQ
    alphas: tuple[float, ...] = DEFAULT_ALPHAS

    def __post_init__(self):
        object.__setattr__(self, "j1", _check_lags("j1", self.j1))
        object.__setattr__(self, "j2", _check_lags("j2", self.j2))
        object.__setattr__(self, "p", _check_lags("p", self.p))
        object.__setattr__(self, "q", _check_lags("q", self.q))
        alphas = tuple(float(a) for a in self.alphas)
        if any(a <= 0 or a >= 1 for a in alphas):
            raise ConfigurationError("alphas must lie in (0, 1)")
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ConfigurationError("alphas must be strictly increasing")
        object.__setattr__(self, "alphas", alphas)
        if self.j2 and not alphas:
            raise ConfigurationError("threshold lags given but no percentile levels")

    @property
    def max_mean_lag(self) -> int:
        return max(self.j1 + self.j2, default=0)

    @property
    def max_var_lag(self) -> int:
        return max(self.p + self.q, default=0)

    def to_dict(self) -> dict:
        return {
            "j1": list(self.j1),
            "j2": list(self.j2),
            "p": list(self.p),
            "q": list(self.q),
            "alphas": list(self.alphas),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LagConfig":
        return cls(
            j1=tuple(d["j1"]),
            j2=tuple(d["j2"]),
            p=tuple(d["p"]),
            q=tuple(d["q"]),
            alphas=tuple(d["alphas"]),
        )


def mask_matrix() -> np.ndarray:
    """6 x 6 binary matrix: pressure equations exclude wind sources."""
    a = np.ones((6, 6), dtype=np.int8)
    a[:3, 3:] = 0
    return a


def allowed_sources(equation: int) -> tuple[int, ...]:
    """Source components (0-based) permitted for a 0-based target equation."""
    if not 0 <= equation < 6:
        raise ConfigurationError(f"equation index must be 0..5, got {equation}")
    return tuple(range(3)) if equation < 3 else tuple(range(6))


@dataclass(frozen=True)
class ColumnSpec:
    """Human-readable view of one catalog column (1-based indices)."""

    family: str
    equation: int
    source: int | None
    lag: int | None
    i1: int | None
    i2: int | None
    alpha: float | None


class ColumnCatalog:
    """Per-column metadata stored as parallel arrays.

    ``pair_idx`` indexes the canonical expansion-term order of
    :meth:`windcast.basis.BasisPair.labels`; entry 0 is the plain
    (non-periodic) term.
    """

    def __init__(
        self,
        equation: int,
        kind: str,
        pair: BasisPair,
        alphas: tuple[float, ...],
        family_code: np.ndarray,
        source: np.ndarray,
        lag: np.ndarray,
        pair_idx: np.ndarray,
        alpha_idx: np.ndarray,
    ):
        self.equation = equation  # 0-based target equation
        self.kind = kind  # "mean" | "variance"
        self.pair = pair
        self.alphas = alphas
        self.family_code = family_code
        self.source = source
        self.lag = lag
        self.pair_idx = pair_idx
        self.alpha_idx = alpha_idx
        self._labels = pair.labels
        self._key_index: dict | None = None

    def __len__(self) -> int:
        return int(self.family_code.shape[0])

    def spec(self, i: int) -> ColumnSpec:
        i1, i2 = self._labels[self.pair_idx[i]]
        plain = self.pair_idx[i] == 0
        return ColumnSpec(
            family=FAMILIES[self.family_code[i]],
            equation=self.equation + 1,
            source=None if self.source[i] < 0 else int(self.source[i]) + 1,
            lag=None if self.lag[i] < 0 else int(self.lag[i]),
            i1=None if plain else int(i1),
            i2=None if plain else int(i2),
            alpha=None if self.alpha_idx[i] < 0 else float(self.alphas[self.alpha_idx[i]]),
        )

    def key(self, i: int) -> tuple:
        """Equation-independent identity of column i, used for serialization."""
        s = self.spec(i)
        return (s.family, s.source, s.lag, s.i1, s.i2, s.alpha)

    def index_of(self, key: tuple) -> int:
        if self._key_index is None:
            self._key_index = {self.key(i): i for i in range(len(self))}
        return self._key_index[key]

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["family", "equation", "source", "lag", "i1", "i2", "alpha"])
            for i in range(len(self)):
                s = self.spec(i)
                writer.writerow(
                    [
                        s.family,
                        s.equation,
                        "" if s.source is None else s.source,
                        "" if s.lag is None else s.lag,
                        "" if s.i1 is None else s.i1,
                        "" if s.i2 is None else s.i2,
                        "" if s.alpha is None else s.alpha,
                    ]
                )


def mean_column_count(cfg: LagConfig, pair: BasisPair, equation: int) -> int:
    """Closed-form width of the mean design for one target equation."""
    n_src = len(allowed_sources(equation))
    np_ = pair.n_pairs
    return np_ + len(cfg.j1) * n_src * np_ + len(cfg.j2) * len(cfg.alphas) * n_src * np_


def variance_column_count(cfg: LagConfig, pair: BasisPair) -> int:
    """Closed-form width of the scale design (same for every equation)."""
    return pair.n_pairs * (1 + len(cfg.p) + len(cfg.q))


def build_mean_catalog(cfg: LagConfig, pair: BasisPair, equation: int) -> ColumnCatalog:
    """Enumerate mean-design columns for a 0-based target equation."""
    sources = allowed_sources(equation)
    np_ = pair.n_pairs
    n = mean_column_count(cfg, pair, equation)
    fam = np.empty(n, dtype=np.int8)
    src = np.full(n, -1, dtype=np.int16)
    lag = np.full(n, -1, dtype=np.int32)
    pidx = np.empty(n, dtype=np.int32)
    aidx = np.full(n, -1, dtype=np.int32)
    pair_range = np.arange(np_, dtype=np.int32)
    c = 0
    fam[c : c + np_] = _FCODE[F_INTERCEPT]
    pidx[c : c + np_] = pair_range
    c += np_
    ar_fams = np.where(pair_range == 0, _FCODE[F_AR], _FCODE[F_AR_PER]).astype(np.int8)
    for j in cfg.j1:
        for m in sources:
            fam[c : c + np_] = ar_fams
            src[c : c + np_] = m
            lag[c : c + np_] = j
            pidx[c : c + np_] = pair_range
            c += np_
    th_fams = np.where(pair_range == 0, _FCODE[F_THRESH], _FCODE[F_THRESH_PER]).astype(np.int8)
    for j in cfg.j2:
        for ai in range(len(cfg.alphas)):
            for m in sources:
                fam[c : c + np_] = th_fams
                src[c : c + np_] = m
                lag[c : c + np_] = j
                pidx[c : c + np_] = pair_range
                aidx[c : c + np_] = ai
                c += np_
    assert c == n
    return ColumnCatalog(equation, "mean", pair, cfg.alphas, fam, src, lag, pidx, aidx)


def build_variance_catalog(cfg: LagConfig, pair: BasisPair, equation: int) -> ColumnCatalog:
    """Enumerate scale-design columns; shocks come from the own equation."""
    np_ = pair.n_pairs
    n = variance_column_count(cfg, pair)
    fam = np.empty(n, dtype=np.int8)
    src = np.full(n, equation, dtype=np.int16)
    lag = np.full(n, -1, dtype=np.int32)
    pidx = np.empty(n, dtype=np.int32)
    aidx = np.full(n, -1, dtype=np.int32)
    pair_range = np.arange(np_, dtype=np.int32)
    c = 0
    fam[c : c + np_] = _FCODE[F_VAR_INTERCEPT]
    src[c : c + np_] = -1
    pidx[c : c + np_] = pair_range
    c += np_
    pos_fams = np.where(pair_range == 0, _FCODE[F_ARCH_POS], _FCODE[F_ARCH_POS_PER]).astype(np.int8)
    for h in cfg.p:
        fam[c : c + np_] = pos_fams
        lag[c : c + np_] = h
        pidx[c : c + np_] = pair_range
        c += np_
    neg_fams = np.where(pair_range == 0, _FCODE[F_ARCH_NEG], _FCODE[F_ARCH_NEG_PER]).astype(np.int8)
    for h in cfg.q:
        fam[c : c + np_] = neg_fams
        lag[c : c + np_] = h
        pidx[c : c + np_] = pair_range
        c += np_
    assert c == n
    return ColumnCatalog(equation, "variance", pair, cfg.alphas, fam, src, lag, pidx, aidx)


@dataclass(frozen=True)
class Design:
    """A design matrix with its response, catalog, and row bookkeeping.

    ``rows`` maps matrix rows back to indices of the source array the
    design was built from (state rows for the mean model, residual rows
    for the scale model).
    """

    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    catalog: ColumnCatalog
    rows: np.ndarray = field(repr=False)


def build_mean_design(
    states: StateMatrix,
    thresholds: ThresholdSet,
    basis: BasisBlock,
    cfg: LagConfig,
    equation: int,
) -> Design:
    """Assemble the mean design for one 0-based target equation.

    The first ``max(j1 + j2)`` rows are dropped; no presample values are
    imputed.  The basis block must cover all state rows.
    """
    Y = states.values
    T = Y.shape[0]
    L = cfg.max_mean_lag
    if T <= L:
        raise InsufficientDataError(f"T={T} rows cannot support max lag {L}")
    if basis.pair_matrix.shape[0] != T:
        raise ConfigurationError("basis block must be evaluated at every state row")
    if not np.all(np.isfinite(Y)):
        raise NumericalInputError("state matrix contains non-finite values")
    catalog = build_mean_catalog(cfg, basis.pair, equation)
    pm = basis.pair_matrix[L:]
    n_rows = T - L
    X = np.empty((n_rows, len(catalog)), dtype=float)
    np_ = basis.pair.n_pairs
    c = 0
    X[:, :np_] = pm
    c += np_
    for j in cfg.j1:
        for m in allowed_sources(equation):
            X[:, c : c + np_] = Y[L - j : T - j, m, None] * pm
            c += np_
    for j in cfg.j2:
        for ai in range(len(cfg.alphas)):
            for m in allowed_sources(equation):
                base = np.maximum(Y[L - j : T - j, m], thresholds.values[m, ai])
                X[:, c : c + np_] = base[:, None] * pm
                c += np_
    y = Y[L:, equation].copy()
    return Design(X=X, y=y, catalog=catalog, rows=np.arange(L, T))


def shock_parts(eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split residuals into nonnegative positive / negated-negative parts.

    The positive branch keeps shocks with eps > 0, the negative branch
    keeps -eps for eps <= 0, so a zero shock contributes to neither.
    """
    return np.maximum(eps, 0.0), np.maximum(-eps, 0.0)


def _variance_matrix(eps_eq: np.ndarray, pm: np.ndarray, cfg: LagConfig, np_: int) -> np.ndarray:
    """Scale design over all residual rows; unavailable lags count as zero shock."""
    n = eps_eq.shape[0]
    pos, neg = shock_parts(eps_eq)
    V = np_ * (1 + len(cfg.p) + len(cfg.q))
    X = np.empty((n, V), dtype=float)
    c = 0
    X[:, :np_] = pm
    c += np_
    for part in (pos, neg):
        lags = cfg.p if part is pos else cfg.q
        for h in lags:
            shifted = np.zeros(n)
            shifted[h:] = part[:-h]
            X[:, c : c + np_] = shifted[:, None] * pm
            c += np_
    return X


def build_variance_design(
    residuals: np.ndarray,
    basis: BasisBlock,
    cfg: LagConfig,
    equation: int,
) -> Design:
    """Assemble the scale design for one equation from a residual matrix.

    ``residuals`` is T_res x 6, aligned with the basis block.  Rows
    without a complete shock history (the first ``max(p + q)``) are
    dropped from the returned estimation design.
    """
    if residuals.ndim != 2 or residuals.shape[1] != 6:
        raise ConfigurationError("residuals must be T x 6")
    n = residuals.shape[0]
    Lv = cfg.max_var_lag
    if n <= Lv:
        raise InsufficientDataError(f"{n} residual rows cannot support shock lag {Lv}")
    if basis.pair_matrix.shape[0] != n:
        raise ConfigurationError("basis block must be evaluated at every residual row")
    eps = residuals[:, equation]
    if not np.all(np.isfinite(eps)):
        raise NumericalInputError("residuals contain non-finite values")
    catalog = build_variance_catalog(cfg, basis.pair, equation)
    X = _variance_matrix(eps, basis.pair_matrix, cfg, basis.pair.n_pairs)
    return Design(
        X=X[Lv:],
        y=np.abs(eps[Lv:]),
        catalog=catalog,
        rows=np.arange(Lv, n),
    )


def fill_variance_columns(
    eps_eq: np.ndarray,
    pair_rows: np.ndarray,
    catalog: ColumnCatalog,
    columns: np.ndarray,
) -> np.ndarray:
    """Evaluate a subset of scale-design columns over all residual rows.

    Mirrors the padded full build: shock lags reaching before the first
    residual row contribute zero.
    """
    n = eps_eq.shape[0]
    pos, neg = shock_parts(eps_eq)
    out = np.empty((n, columns.shape[0]), dtype=float)
    for k, col in enumerate(columns):
        fam = catalog.family_code[col]
        pcol = pair_rows[:, catalog.pair_idx[col]]
        if fam == _FCODE[F_VAR_INTERCEPT]:
            out[:, k] = pcol
            continue
        part = pos if fam in (_FCODE[F_ARCH_POS], _FCODE[F_ARCH_POS_PER]) else neg
        h = catalog.lag[col]
        shifted = np.zeros(n)
        shifted[h:] = part[:-h]
        out[:, k] = shifted * pcol
    return out


def fill_mean_columns(
    values: np.ndarray,
    thresholds: ThresholdSet,
    pair_rows: np.ndarray,
    catalog: ColumnCatalog,
    columns: np.ndarray,
    t_rows: np.ndarray,
) -> np.ndarray:
    """Evaluate a subset of mean-design columns at arbitrary state rows.

    ``pair_rows`` must hold the expansion-term values for exactly the
    requested ``t_rows``.  Produces values identical to the full
    :func:`build_mean_design` matrix restricted to those columns.
    """
    out = np.empty((t_rows.shape[0], columns.shape[0]), dtype=float)
    for k, col in enumerate(columns):
        fam = catalog.family_code[col]
        pcol = pair_rows[:, catalog.pair_idx[col]]
        if fam == _FCODE[F_INTERCEPT]:
            out[:, k] = pcol
            continue
        base = values[t_rows - catalog.lag[col], catalog.source[col]]
        if fam in (_FCODE[F_THRESH], _FCODE[F_THRESH_PER]):
            base = np.maximum(
                base, thresholds.values[catalog.source[col], catalog.alpha_idx[col]]
            )
        out[:, k] = base * pcol
    return out
