"""Raw observations, gap interpolation, Cartesian state decomposition.

The engine works on a six-dimensional state built from the three
observed channels: pressure, pressure times sine/cosine of direction,
speed, and speed times sine/cosine of direction.  Direction is circular,
so all direction handling (interpolation included) goes through the
sine/cosine components rather than raw angles.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from .errors import ConfigurationError, DataQualityError, UnfillableGapError

STEP_MINUTES = 10
STEP = timedelta(minutes=STEP_MINUTES)
COMPONENTS = ("p", "p_sin", "p_cos", "w", "w_sin", "w_cos")
CSV_HEADER = ("timestamp", "direction_deg", "speed_ms", "pressure_hpa")

# Percentile levels used for the threshold regressors at full scale.
DEFAULT_ALPHAS = tuple(
    round(a, 2)
    for a in list(np.arange(0.01, 0.051, 0.01))
    + list(np.arange(0.10, 0.951, 0.05))
    + list(np.arange(0.96, 0.991, 0.01))
)


def _steps_since_year_start(ts: datetime) -> int:
    """Ten-minute steps from midnight Jan 1 of ts's year to ts."""
    anchor = datetime(ts.year, 1, 1, tzinfo=ts.tzinfo)
    delta = ts - anchor
    seconds = delta.days * 86400 + delta.seconds
    return seconds // (STEP_MINUTES * 60)


@dataclass(frozen=True)
class ObservationFrame:
    """Aligned ten-minute series of direction (deg), speed (m/s), pressure (hPa).

    ``missing_mask`` is a T x 3 boolean array (direction, speed, pressure
    column order) marking cells that were missing before interpolation.
    ``interpolated_fraction`` reports how many cells a prior
    :func:`interpolate_gaps` call filled.
    """

    timestamps: tuple[datetime, ...]
    direction: np.ndarray
    speed: np.ndarray
    pressure: np.ndarray
    missing_mask: np.ndarray = field(repr=False)
    interpolated_fraction: float = 0.0

    def __post_init__(self):
        n = len(self.timestamps)
        for name in ("direction", "speed", "pressure"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise DataQualityError(f"{name} length {arr.shape} != {n} timestamps")
        if self.missing_mask.shape != (n, 3):
            raise DataQualityError("missing_mask must be T x 3")
        for a, b in zip(self.timestamps[:-1], self.timestamps[1:]):
            if b - a != STEP:
                raise DataQualityError(
                    f"timestamps must be strictly increasing at {STEP_MINUTES}-minute"
                    f" spacing; found {a} -> {b}"
                )
        self._validate_ranges()

    def _validate_ranges(self):
        present = ~self.missing_mask
        d, s, p = self.direction, self.speed, self.pressure
        if np.any((d[present[:, 0]] < 0) | (d[present[:, 0]] > 360)):
            raise DataQualityError("direction outside [0, 360] degrees")
        if np.any(s[present[:, 1]] < 0):
            raise DataQualityError("negative wind speed")
        if np.any(p[present[:, 2]] <= 0):
            raise DataQualityError("non-positive air pressure")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())

    @property
    def t0(self) -> int:
        """Ten-minute index of the first row within its calendar year.

        Used to anchor the diurnal/annual basis phase: index 0 of the
        basis corresponds to midnight on January 1.
        """
        return _steps_since_year_start(self.timestamps[0])


def frame_from_arrays(
    start: datetime,
    direction,
    speed,
    pressure,
    missing_mask: np.ndarray | None = None,
) -> ObservationFrame:
    """Build a frame from plain arrays and a start timestamp.

    NaN cells are treated as missing when no mask is given.
    """
    direction = np.asarray(direction, dtype=float)
    speed = np.asarray(speed, dtype=float)
    pressure = np.asarray(pressure, dtype=float)
    n = direction.shape[0]
    if missing_mask is None:
        missing_mask = np.column_stack(
            [np.isnan(direction), np.isnan(speed), np.isnan(pressure)]
        )
    timestamps = tuple(start + i * STEP for i in range(n))
    return ObservationFrame(
        timestamps=timestamps,
        direction=direction,
        speed=speed,
        pressure=pressure,
        missing_mask=np.asarray(missing_mask, dtype=bool),
    )


def _interp_channel(values: np.ndarray, missing: np.ndarray) -> np.ndarray:
    idx = np.arange(values.shape[0])
    out = values.copy()
    out[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return out


def interpolate_gaps(frame: ObservationFrame, max_gap_fraction: float = 0.05) -> ObservationFrame:
    """Fill interior gaps by linear interpolation, per channel.

    Direction gaps are interpolated on the unit-circle components
    (sine and cosine of the angle) and re-projected, so a gap between
    350 and 10 degrees resolves to 0 degrees rather than 180.

    Raises
    ------
    UnfillableGapError
        If any channel is missing at the first or last row.
    DataQualityError
        If the overall fraction of missing cells exceeds
        ``max_gap_fraction``.
    """
    if not frame.has_missing:
        return frame
    mask = frame.missing_mask
    if mask[0].any() or mask[-1].any():
        raise UnfillableGapError("missing values at the series ends cannot be interpolated")
    frac = float(mask.mean())
    if frac >= max_gap_fraction:
        raise DataQualityError(
            f"missing fraction {frac:.4f} exceeds cap {max_gap_fraction:.4f}"
        )
    rad = np.deg2rad(frame.direction)
    dir_missing = mask[:, 0]
    sin_d = _interp_channel(np.sin(rad), dir_missing)
    cos_d = _interp_channel(np.cos(rad), dir_missing)
    direction = frame.direction.copy()
    direction[dir_missing] = np.rad2deg(
        np.arctan2(sin_d[dir_missing], cos_d[dir_missing])
    ) % 360.0
    speed = _interp_channel(frame.speed, mask[:, 1])
    pressure = _interp_channel(frame.pressure, mask[:, 2])
    return replace(
        frame,
        direction=direction,
        speed=speed,
        pressure=pressure,
        missing_mask=np.zeros_like(mask),
        interpolated_fraction=frac,
    )


@dataclass(frozen=True)
class StateVector:
    """One row of the six-dimensional dependent vector."""

    p: float
    p_sin: float
    p_cos: float
    w: float
    w_sin: float
    w_cos: float

    def __post_init__(self):
        for mag, s, c, name in (
            (self.p, self.p_sin, self.p_cos, "pressure"),
            (self.w, self.w_sin, self.w_cos, "speed"),
        ):
            lhs = s * s + c * c
            rhs = mag * mag
            if abs(lhs - rhs) > 1e-9 * max(rhs, 1.0):
                raise DataQualityError(
                    f"{name} components inconsistent: sin^2+cos^2={lhs} vs magnitude^2={rhs}"
                )

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.p_sin, self.p_cos, self.w, self.w_sin, self.w_cos])


@dataclass(frozen=True)
class StateMatrix:
    """T x 6 state history with its basis phase anchor.

    ``t0`` is the ten-minute index of row 0 relative to the basis
    anchor (midnight Jan 1); synthetic series use 0.
    ``direction_defined`` flags rows where wind direction exists
    (speed > 0); calm rows decompose to zero sine/cosine components and
    are excluded from direction scoring.
    """

    values: np.ndarray = field(repr=False)
    t0: int = 0
    direction_defined: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != 6:
            raise DataQualityError(f"state matrix must be T x 6, got {self.values.shape}")
        if self.direction_defined is None:
            object.__setattr__(
                self,
                "direction_defined",
                ~((self.values[:, 4] == 0.0) & (self.values[:, 5] == 0.0)),
            )

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[0]

    def row(self, t: int) -> StateVector:
        v = self.values[t]
        return StateVector(*v)

    def window(self, start: int, stop: int) -> "StateMatrix":
        return StateMatrix(
            values=self.values[start:stop],
            t0=self.t0 + start,
            direction_defined=self.direction_defined[start:stop],
        )


def decompose(frame: ObservationFrame) -> StateMatrix:
    """Map observations to the six-dimensional state.

    Row t is (P, P sin D, P cos D, W, W sin D, W cos D) with the angle
    converted to radians internally.  Requires a gap-free frame.
    """
    if frame.has_missing:
        raise DataQualityError("frame has missing cells; interpolate_gaps first")
    rad = np.deg2rad(frame.direction % 360.0)
    sin_d, cos_d = np.sin(rad), np.cos(rad)
    w = frame.speed
    p = frame.pressure
    values = np.column_stack([p, p * sin_d, p * cos_d, w, w * sin_d, w * cos_d])
    return StateMatrix(values=values, t0=frame.t0, direction_defined=w > 0)


def reconstruct_direction(sin_part: np.ndarray, cos_part: np.ndarray) -> np.ndarray:
    """Quadrant-correct angle in [0, 360) from scaled sine/cosine parts."""
    return np.rad2deg(np.arctan2(sin_part, cos_part)) % 360.0


@dataclass(frozen=True)
class ThresholdSet:
    """Per-component empirical percentiles used as regressor floors."""

    alphas: tuple[float, ...]
    values: np.ndarray = field(repr=False)  # 6 x len(alphas)

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if a.size == 0:
            return
        if np.any(a <= 0) or np.any(a >= 1):
            raise ConfigurationError("alphas must lie strictly inside (0, 1)")
        if np.any(np.diff(a) <= 0):
            raise ConfigurationError("alphas must be strictly increasing")
        if self.values.shape != (6, a.size):
            raise ConfigurationError(
                f"threshold values must be 6 x {a.size}, got {self.values.shape}"
            )
        if np.any(np.diff(self.values, axis=1) < 0):
            raise ConfigurationError("thresholds must be non-decreasing in alpha")

    def value(self, component: int, alpha: float) -> float:
        j = self.alphas.index(alpha)
        return float(self.values[component, j])


def empirical_thresholds(states: StateMatrix, alphas) -> ThresholdSet:
    """Component-wise empirical percentiles of the state history.

    Uses linear interpolation between order statistics (the numpy
    default convention): for a sorted sample x_1..x_n the alpha
    percentile is x at fractional position 1 + (n-1) * alpha.
    """
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) == 0:
        raise ConfigurationError("at least one percentile level is required")
    if states.T == 0:
        raise ConfigurationError("empty state matrix")
    vals = np.quantile(states.values, alphas, axis=0, method="linear").T
    return ThresholdSet(alphas=alphas, values=vals)


# ---------------------------------------------------------------------------
# CSV interface: header 'timestamp,direction_deg,speed_ms,pressure_hpa',
# ISO-8601 timestamps, empty field = missing.
# ---------------------------------------------------------------------------


def read_csv(path) -> ObservationFrame:
    import csv

    timestamps: list[datetime] = []
    cols: list[list[float]] = [[], [], []]
    miss: list[list[bool]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataQualityError(
                f"expected header {','.join(CSV_HEADER)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataQualityError(f"line {lineno}: expected 4 fields, got {len(row)}")
            try:
                timestamps.append(datetime.fromisoformat(row[0].strip()))
            except ValueError as exc:
                raise DataQualityError(f"line {lineno}: bad timestamp {row[0]!r}") from exc
            rowmiss = []
            for j, cell in enumerate(row[1:]):
                cell = cell.strip()
                if cell == "":
                    cols[j].append(np.nan)
                    rowmiss.append(True)
                else:
                    try:
                        cols[j].append(float(cell))
                    except ValueError as exc:
                        raise DataQualityError(
                            f"line {lineno}: bad number {cell!r}"
                        ) from exc
                    rowmiss.append(False)
            miss.append(rowmiss)
    if not timestamps:
        raise DataQualityError(f"no data rows in {path}")
    frame = ObservationFrame(
        timestamps=tuple(timestamps),
        direction=np.array(cols[0]),
        speed=np.array(cols[1]),
        pressure=np.array(cols[2]),
        missing_mask=np.array(miss, dtype=bool),
    )
    return frame


def write_csv(path, frame: ObservationFrame) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i, ts in enumerate(frame.timestamps):
            cells = [ts.isoformat()]
            for j, arr in enumerate((frame.direction, frame.speed, frame.pressure)):
                if frame.missing_mask[i, j]:
                    cells.append("")
                else:
                    cells.append(repr(float(arr[i])))
            writer.writerow(cells)
