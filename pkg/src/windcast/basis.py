"""Periodic cubic B-spline bases on equidistant wrapped knots.

Every regression coefficient in the mean and scale models is made
time-varying by expanding it in a diurnal basis, an annual basis, and
their pairwise products.  Both bases are built from the cardinal cubic
B-spline shifted to k equidistant knots on a circle of circumference
``period``, so each basis function is an exact shifted copy of one
shape, is nonnegative, twice continuously differentiable, and the k
functions sum to one everywhere.

Knot ``i`` (1-based) sits at ``(i - 1) * period / k`` and basis function
``i`` attains its maximum there.  Evaluation happens on ``t mod period``,
which makes periodicity exact for integer time indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Ten-minute observations: one day and one mean Julian year.
DIURNAL_PERIOD = 144
ANNUAL_PERIOD = 52596  # 365.25 * 144


def _cardinal_cubic(x: np.ndarray) -> np.ndarray:
    """Cardinal cubic B-spline with support [0, 4), peak 2/3 at x = 2."""
    out = np.zeros_like(x, dtype=float)
    seg = np.floor(x).astype(np.int64)
    u = x - seg
    m = seg == 0
    out[m] = u[m] ** 3 / 6.0
    m = seg == 1
    v = u[m]
    out[m] = (-3.0 * v**3 + 3.0 * v**2 + 3.0 * v + 1.0) / 6.0
    m = seg == 2
    v = u[m]
    out[m] = (3.0 * v**3 - 6.0 * v**2 + 4.0) / 6.0
    m = seg == 3
    v = u[m]
    out[m] = (1.0 - v) ** 3 / 6.0
    return out


def evaluate_basis(period: int, k: int, t_indices) -> np.ndarray:
    """Evaluate the k periodic cubic basis functions at the given times.

    Parameters
    ----------
    period : int
        Observations per cycle (e.g. 144 for the diurnal cycle).
    k : int
        Number of equidistant basis functions; must satisfy
        ``4 <= k <= period`` so the cubic support wraps without
        self-overlap.
    t_indices : array_like
        Time indices (integers; floats are accepted and reduced
        modulo the period).

    Returns
    -------
    numpy.ndarray
        Matrix of shape ``(len(t_indices), k)``.  Rows sum to one;
        column ``i`` peaks at knot ``i``.
    """
    if k < 4:
        raise ConfigurationError(f"cubic periodic basis needs k >= 4, got k={k}")
    if k > period:
        raise ConfigurationError(f"k={k} exceeds period={period}")
    t = np.atleast_1d(np.asarray(t_indices))
    u = (t % period) * (float(k) / float(period))
    cols = []
    for i in range(1, k + 1):
        x = (u - (i - 1) + 2.0) % k
        b = np.zeros_like(u, dtype=float)
        inside = x < 4.0
        b[inside] = _cardinal_cubic(x[inside])
        cols.append(b)
    return np.column_stack(cols)


@dataclass(frozen=True)
class PeriodicBasis:
    """One periodic basis: ``k`` equidistant cubic bumps over ``period``."""

    period: int
    k: int
    degree: int = 3

    def __post_init__(self):
        if self.degree != 3:
            raise ConfigurationError("only cubic (degree 3) bases are supported")
        if self.k < 4:
            raise ConfigurationError(f"k must be >= 4, got {self.k}")
        if self.k > self.period:
            raise ConfigurationError(f"k={self.k} exceeds period={self.period}")

    def evaluate(self, t_indices) -> np.ndarray:
        return evaluate_basis(self.period, self.k, t_indices)


def pair_labels(k1: int, k2: int) -> list[tuple[int, int]]:
    """Canonical order of the (diurnal, annual) expansion terms.

    Index 1 in either slot denotes "constant in that period", so the
    first label ``(1, 1)`` is the plain (non-periodic) term.  The first
    periodic basis function of each cycle is omitted from the expansion
    (indices run from 2) because the functions sum to one and would
    otherwise be collinear with the constant.
    """
    labels = [(1, 1)]
    labels += [(i1, 1) for i1 in range(2, k1 + 1)]
    labels += [(1, i2) for i2 in range(2, k2 + 1)]
    labels += [(i1, i2) for i1 in range(2, k1 + 1) for i2 in range(2, k2 + 1)]
    return labels


@dataclass(frozen=True)
class BasisPair:
    """Diurnal and annual bases used jointly by all coefficient expansions."""

    k1: int = 6
    k2: int = 6
    s1: int = DIURNAL_PERIOD
    s2: int = ANNUAL_PERIOD

    @property
    def n_pairs(self) -> int:
        """Expansion terms per coefficient, plain term included (= k1*k2)."""
        return self.k1 * self.k2

    @property
    def labels(self) -> list[tuple[int, int]]:
        return pair_labels(self.k1, self.k2)

    def pair_matrix(self, t_indices) -> np.ndarray:
        """T x (k1*k2) matrix of expansion-term values at the given times.

        Column order follows :func:`pair_labels`: the constant, diurnal
        terms 2..k1, annual terms 2..k2, then interactions with the
        diurnal index outermost.
        """
        t = np.atleast_1d(np.asarray(t_indices))
        d = evaluate_basis(self.s1, self.k1, t)[:, 1:]  # drop first function
        a = evaluate_basis(self.s2, self.k2, t)[:, 1:]
        n = t.shape[0]
        out = np.empty((n, self.n_pairs), dtype=float)
        out[:, 0] = 1.0
        nd, na = self.k1 - 1, self.k2 - 1
        out[:, 1 : 1 + nd] = d
        out[:, 1 + nd : 1 + nd + na] = a
        inter = d[:, :, None] * a[:, None, :]
        out[:, 1 + nd + na :] = inter.reshape(n, nd * na)
        return out

    def to_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "s1": self.s1, "s2": self.s2}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisPair":
        return cls(k1=int(d["k1"]), k2=int(d["k2"]), s1=int(d["s1"]), s2=int(d["s2"]))


@dataclass(frozen=True)
class BasisBlock:
    """Materialized periodic regressor columns for a range of times.

    ``diurnal`` holds basis functions 2..k1, ``annual`` 2..k2, and
    ``interaction`` their products in (diurnal outer, annual inner)
    order, matching the tail of :func:`pair_labels`.
    """

    pair: BasisPair
    t_indices: np.ndarray
    diurnal: np.ndarray = field(repr=False)
    annual: np.ndarray = field(repr=False)
    interaction: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        """Concatenation [diurnal | annual | interaction], T x (k1*k2 - 1)."""
        return np.hstack([self.diurnal, self.annual, self.interaction])

    @property
    def pair_matrix(self) -> np.ndarray:
        """As :attr:`matrix` but with the leading constant column, T x k1*k2."""
        ones = np.ones((self.diurnal.shape[0], 1))
        return np.hstack([ones, self.diurnal, self.annual, self.interaction])


def build_basis_block(
    T: int,
    k1: int = 6,
    k2: int = 6,
    s1: int = DIURNAL_PERIOD,
    s2: int = ANNUAL_PERIOD,
    offset: int = 0,
) -> BasisBlock:
    """Evaluate the periodic block for rows ``offset .. offset + T - 1``."""
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    pair = BasisPair(k1=k1, k2=k2, s1=s1, s2=s2)
    t = np.arange(offset, offset + T, dtype=np.int64)
    pm = pair.pair_matrix(t)
    nd, na = k1 - 1, k2 - 1
    return BasisBlock(
        pair=pair,
        t_indices=t,
        diurnal=pm[:, 1 : 1 + nd],
        annual=pm[:, 1 + nd : 1 + nd + na],
        interaction=pm[:, 1 + nd + na :],
    )
