"""Hourly market data: ingestion, DST repair, daily-by-hour layout and features.

The hourly CSV carries one row per delivery hour.  Daily series (fuels and
carbon) may be given only on some rows; they are forward-filled onto the hourly
grid.  After :func:`normalize_dst` every calendar day has exactly 24 rows and
:func:`to_daily` reshapes the panel into ``days x 24`` matrices.

Feature layout for a target day ``t`` and hour ``s`` (linear expert model)::

    [Y[t-1,s], Y[t-2,s], Y[t-7,s], Mon, Sat, Sun, load, wind, solar,
     EUA[t-1], NGas[t-2], Oil[t-2], Coal[t-2]]           (+ intercept)

and for the recurrent branches one vector per target day::

    [Y[t-1, 0..23], Mon, Sat, Sun, fund[t, 0..23, :] (hour-major), fuels]
"""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DegenerateColumn, GapError, InsufficientHistory, ParseError, RangeError

HOURS = 24
HOURLY_COLUMNS = ("price", "load_fc", "wind_onshore_fc", "wind_offshore_fc", "solar_fc")
DAILY_COLUMNS = ("coal", "gas", "oil", "eua")
COLUMNS = HOURLY_COLUMNS + DAILY_COLUMNS
UNITS = {
    "price": "EUR/MWh",
    "load_fc": "MWh",
    "wind_onshore_fc": "MWh",
    "wind_offshore_fc": "MWh",
    "solar_fc": "MWh",
    "coal": "EUR/t",
    "gas": "EUR/MWh",
    "oil": "EUR/bbl",
    "eua": "EUR/tCO2",
}
# order of the daily price block, as in the expert model
FUEL_ORDER = ("eua", "gas", "oil", "coal")
CALENDAR_NAMES = ("mon", "sat", "sun")
DEFAULT_TZ = "Europe/Berlin"
# (train, validation, test) years used when the history is long enough
LONG_SPLIT_YEARS = (4, 2, 2)
DAYS_PER_YEAR = 365

_TS_RE = re.compile(
    r"^(\d{4}-\d{2}-\d{2})[T ](\d{2}:\d{2}(?::\d{2}(?:\.\d+)?)?)\s*(Z|[+-]\d{2}:?\d{2})?$"
)
_ONE_HOUR = pd.Timedelta(hours=1)


class DegenerateFeatureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HourlyPanel:
    """Hourly series indexed by local wall-clock time.

    ``offsets`` holds the UTC offset in minutes of every row (NaN where the
    source timestamp had none); it is used to recognise DST transitions.
    """

    frame: pd.DataFrame
    offsets: np.ndarray
    tz: str = DEFAULT_TZ

    def __post_init__(self):
        if len(self.offsets) != len(self.frame):
            raise ValueError("offsets must align with frame rows")

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return self.frame.index

    def __len__(self):
        return len(self.frame)


@dataclass(frozen=True)
class DailyMatrix:
    dates: np.ndarray  # datetime64[D], one per row
    price: np.ndarray  # (T, 24)
    fundamentals: np.ndarray  # (T, 24, D_fund)
    fuels: np.ndarray  # (T, 4) raw daily values in FUEL_ORDER, unlagged
    calendar: np.ndarray  # (T, 3) Mon/Sat/Sun one-hot of the row's own date
    fund_names: tuple = ("load", "wind", "solar")

    @property
    def n_days(self) -> int:
        return self.price.shape[0]

    def save(self, path):
        np.savez(
            path,
            dates=self.dates.astype("datetime64[D]").astype(np.int64),
            price=self.price,
            fundamentals=self.fundamentals,
            fuels=self.fuels,
            calendar=self.calendar,
            fund_names=np.array(self.fund_names),
        )

    @classmethod
    def load(cls, path) -> "DailyMatrix":
        with np.load(path, allow_pickle=False) as z:
            return cls(
                dates=z["dates"].astype("datetime64[D]"),
                price=z["price"],
                fundamentals=z["fundamentals"],
                fuels=z["fuels"],
                calendar=z["calendar"],
                fund_names=tuple(str(s) for s in z["fund_names"]),
            )

    def slice(self, start: int, stop: int) -> "DailyMatrix":
        s = slice(start, stop)
        return DailyMatrix(
            self.dates[s], self.price[s], self.fundamentals[s], self.fuels[s], self.calendar[s], self.fund_names
        )


@dataclass(frozen=True)
class LagConfig:
    price_lags: tuple = (1, 2, 7)
    # publication lags of the daily series, in days before the target day
    fuel_lags: dict = field(default_factory=lambda: {"eua": 1, "gas": 2, "oil": 2, "coal": 2})

    @property
    def max_lag(self) -> int:
        return max(max(self.price_lags), max(self.fuel_lags.values()))


@dataclass(frozen=True)
class FeatureSets:
    linear: np.ndarray  # (N, 24, p) per-hour design rows without the intercept column
    rnn: np.ndarray  # (N, D) per-day recurrent inputs
    targets: np.ndarray  # (N, 24) prices of the target day
    day_index: np.ndarray  # (N,) row of the target day in the DailyMatrix
    dates: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.targets.shape[0]

    @property
    def n_linear(self) -> int:
        return self.linear.shape[2]

    @property
    def design_width(self) -> int:
        """Per-hour design row width including the intercept."""
        return self.linear.shape[2] + 1

    @property
    def n_rnn(self) -> int:
        return self.rnn.shape[1]

    def row_of_day(self, day: int) -> int:
        row = int(day) - int(self.day_index[0])
        if row < 0 or row >= self.n_samples:
            raise RangeError(f"day {day} has no feature row")
        return row


# --------------------------------------------------------------------------- ingestion


def _parse_timestamp(text: str, row: int):
    m = _TS_RE.match(text.strip())
    if m is None:
        raise ParseError(f"unparseable timestamp {text!r}", row=row, column="timestamp")
    try:
        wall = pd.Timestamp(f"{m.group(1)} {m.group(2)}")
    except ValueError as exc:
        raise ParseError(f"invalid timestamp {text!r}", row=row, column="timestamp") from exc
    off = m.group(3)
    if off is None:
        minutes = np.nan
    elif off == "Z":
        minutes = 0.0
    else:
        sign = -1.0 if off[0] == "-" else 1.0
        digits = off[1:].replace(":", "")
        minutes = sign * (int(digits[:2]) * 60 + int(digits[2:]))
    return wall, minutes


def load_csv(path, schema: dict | None = None, normalize: bool = True) -> HourlyPanel:
    """Read and validate an hourly market CSV.

    ``schema`` may rename columns (``{"columns": {"price": "DA_price", ...}}``),
    change the timestamp header (``"timestamp"``) and the civil timezone used
    to judge DST events (``"tz"``).  Row numbers in errors are 1-based file
    lines, header included.
    """
    schema = schema or {}
    names = {c: c for c in COLUMNS}
    names.update(schema.get("columns", {}))
    ts_col = schema.get("timestamp", "timestamp")
    tz = schema.get("tz", DEFAULT_TZ)

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read CSV: {exc}") from exc
    header = [ts_col] + [names[c] for c in COLUMNS]
    missing = [h for h in header if h not in raw.columns]
    if missing:
        raise ParseError(f"missing columns {missing}", row=1)
    if raw.empty:
        raise ParseError("file has no data rows", row=2)

    stamps, offsets = [], []
    for i, text in enumerate(raw[ts_col].tolist()):
        w, o = _parse_timestamp(text, row=i + 2)
        stamps.append(w)
        offsets.append(o)
    offsets = np.asarray(offsets, dtype=np.float64)

    data = {}
    for c in COLUMNS:
        col = raw[names[c]].str.strip()
        blank = col == ""
        arr = np.empty(len(col))
        for i, text in enumerate(col.tolist()):
            try:
                arr[i] = float(text) if text else np.nan  # float() parses shortest reprs exactly
            except ValueError:
                raise ParseError(f"non-numeric value {text!r}", row=i + 2, column=names[c]) from None
        if not np.all(np.isfinite(arr[~blank.to_numpy()])):
            i = int(np.flatnonzero(~np.isfinite(arr) & ~blank.to_numpy())[0])
            raise ParseError("non-finite value", row=i + 2, column=names[c])
        if c in HOURLY_COLUMNS and blank.any():
            i = int(np.flatnonzero(blank.to_numpy())[0])
            raise ParseError("missing hourly value", row=i + 2, column=names[c])
        data[c] = arr

    frame = pd.DataFrame(data, index=pd.DatetimeIndex(stamps, name="timestamp"))
    _check_order(frame.index, offsets)
    panel = HourlyPanel(frame, offsets, tz)
    if normalize:
        panel = normalize_dst(panel)
    return _fill_daily(panel)


def _check_order(index: pd.DatetimeIndex, offsets: np.ndarray):
    if len(index) < 2:
        return
    known = np.isfinite(offsets)
    utc = index - pd.to_timedelta(np.where(known, offsets, 0.0), unit="m")
    both = known[1:] & known[:-1]
    step_utc = np.diff(utc.asi8)
    step_wall = np.diff(index.asi8)
    step = np.where(both, step_utc, step_wall)
    # equal wall-clock stamps are allowed here; normalize_dst judges them
    bad = np.flatnonzero(step < 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise ParseError("timestamps are not increasing", row=i + 2, column="timestamp")
    bad = np.flatnonzero(both & (step_utc == 0))
    if bad.size:
        i = int(bad[0]) + 1
        raise ParseError("repeated instant", row=i + 2, column="timestamp")


def _fill_daily(panel: HourlyPanel) -> HourlyPanel:
    frame = panel.frame
    if not frame[list(DAILY_COLUMNS)].isna().any().any():
        return panel
    filled = frame.copy()
    filled[list(DAILY_COLUMNS)] = filled[list(DAILY_COLUMNS)].ffill()
    lead = filled[list(DAILY_COLUMNS)].isna()
    if lead.any().any():
        c = lead.any().idxmax()
        i = int(np.flatnonzero(lead[c].to_numpy())[-1])
        raise ParseError("daily series has no value on or before this row", row=i + 2, column=c)
    return HourlyPanel(filled, panel.offsets, panel.tz)


# --------------------------------------------------------------------------- DST


def _nonexistent(ts: pd.Timestamp, tz: str) -> bool:
    try:
        ts.tz_localize(tz, nonexistent="raise", ambiguous="NaT")
    except Exception as exc:  # pytz / zoneinfo raise different classes
        return "NonExistent" in type(exc).__name__
    return False


def _ambiguous(ts: pd.Timestamp, tz: str) -> bool:
    try:
        ts.tz_localize(tz, ambiguous="raise", nonexistent="NaT")
    except Exception as exc:
        return "Ambiguous" in type(exc).__name__
    return False


def normalize_dst(panel: HourlyPanel) -> HourlyPanel:
    """Repair DST irregularities on the wall-clock grid.

    A missing spring-forward hour is filled by linear interpolation of its
    neighbours, a repeated fall-back hour is replaced by the mean of the two
    observations.  Any other gap or repetition raises :class:`GapError`.  A
    panel without DST events is returned unchanged.
    """
    frame, offsets, tz = panel.frame, panel.offsets, panel.tz
    idx = frame.index
    if len(idx) < 2:
        return panel
    steps = np.diff(idx.asi8)
    hour_ns = _ONE_HOUR.value
    if np.all(steps == hour_ns):
        return panel

    values = frame.to_numpy(dtype=np.float64)
    out_idx, out_vals, out_off = [idx[0]], [values[0]], [offsets[0]]
    i = 1
    n = len(idx)
    while i < n:
        step = idx[i] - out_idx[-1]
        if step == pd.Timedelta(0):
            o_prev, o_cur = out_off[-1], offsets[i]
            if np.isfinite(o_prev) and np.isfinite(o_cur):
                is_dst = o_prev > o_cur
            else:
                is_dst = _ambiguous(idx[i], tz)
            if not is_dst:
                raise GapError(f"repeated hour {idx[i]} outside a DST transition")
            # mean of the two observations; a missing daily value keeps the other one
            pair = np.vstack([out_vals[-1], values[i]])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out_vals[-1] = np.nanmean(pair, axis=0)
            out_off[-1] = offsets[i]
        elif step == _ONE_HOUR:
            out_idx.append(idx[i])
            out_vals.append(values[i])
            out_off.append(offsets[i])
        elif step == 2 * _ONE_HOUR:
            hole = out_idx[-1] + _ONE_HOUR
            o_prev, o_cur = out_off[-1], offsets[i]
            if np.isfinite(o_prev) and np.isfinite(o_cur):
                is_dst = o_cur > o_prev
            else:
                is_dst = _nonexistent(hole, tz)
            if not is_dst:
                raise GapError(f"missing hour {hole} outside a DST transition")
            out_idx.append(hole)
            out_vals.append(0.5 * (out_vals[-1] + values[i]))
            out_off.append(o_cur)
            out_idx.append(idx[i])
            out_vals.append(values[i])
            out_off.append(offsets[i])
        elif step > _ONE_HOUR:
            raise GapError(f"gap of {step} before {idx[i]}")
        else:
            raise GapError(f"irregular step {step} before {idx[i]}")
        i += 1
    new_frame = pd.DataFrame(
        np.vstack(out_vals), index=pd.DatetimeIndex(out_idx, name=idx.name), columns=frame.columns
    )
    return HourlyPanel(new_frame, np.asarray(out_off, dtype=np.float64), tz)


# --------------------------------------------------------------------------- daily layout


def to_daily(panel: HourlyPanel, separate_wind: bool = False) -> DailyMatrix:
    """Reshape a normalised panel into daily-by-hour matrices.

    Incomplete first/last days are trimmed.  Daily fuel values are the last
    hourly observation of each day (after forward fill).
    """
    frame = panel.frame
    idx = frame.index
    if len(idx) and np.any(np.diff(idx.asi8) != _ONE_HOUR.value):
        raise GapError("panel is not on a regular hourly grid; run normalize_dst first")
    start = (HOURS - idx[0].hour) % HOURS
    n_days = (len(idx) - start) // HOURS
    if n_days <= 0:
        raise InsufficientHistory("panel holds no complete day")
    frame = frame.iloc[start : start + n_days * HOURS]
    if frame.index[0].hour != 0:
        raise GapError("days must start at 00:00")
    if frame[list(COLUMNS)].isna().any().any():
        raise ParseError("panel contains missing values")

    def grid(col):
        return frame[col].to_numpy(dtype=np.float64).reshape(n_days, HOURS)

    price = grid("price")
    wind_on, wind_off = grid("wind_onshore_fc"), grid("wind_offshore_fc")
    if separate_wind:
        fund = np.stack([grid("load_fc"), wind_on, wind_off, grid("solar_fc")], axis=-1)
        names = ("load", "wind_onshore", "wind_offshore", "solar")
    else:
        fund = np.stack([grid("load_fc"), wind_on + wind_off, grid("solar_fc")], axis=-1)
        names = ("load", "wind", "solar")
    fuels = np.stack([grid(c)[:, -1] for c in FUEL_ORDER], axis=-1)
    dates = frame.index[::HOURS].normalize().values.astype("datetime64[D]")
    return DailyMatrix(dates, price, fund, fuels, calendar_dummies(dates), names)


def calendar_dummies(dates) -> np.ndarray:
    """Mon/Sat/Sun one-hot rows for ``dates``."""
    dow = pd.DatetimeIndex(np.asarray(dates, dtype="datetime64[D]")).dayofweek.to_numpy()
    return np.stack([dow == 0, dow == 5, dow == 6], axis=-1).astype(np.float64)


def build_features(dm: DailyMatrix, lags: LagConfig | None = None) -> FeatureSets:
    """Assemble linear and recurrent inputs for every target day with full history."""
    lags = lags or LagConfig()
    k = lags.max_lag
    T = dm.n_days
    if T < k + 1:
        raise InsufficientHistory(f"need at least {k + 1} days, got {T}")
    t = np.arange(k, T)
    n = t.size
    n_fund = dm.fundamentals.shape[2]

    ylag = np.stack([dm.price[t - lag] for lag in lags.price_lags], axis=-1)  # (n, 24, n_lags)
    cal = dm.calendar[t]  # (n, 3)
    fund = dm.fundamentals[t]  # (n, 24, n_fund)
    fuel_cols = [dm.fuels[t - lags.fuel_lags[name], j] for j, name in enumerate(FUEL_ORDER)]
    fuel = np.stack(fuel_cols, axis=-1)  # (n, 4)

    linear = np.concatenate(
        [
            ylag,
            np.broadcast_to(cal[:, None, :], (n, HOURS, cal.shape[1])),
            fund,
            np.broadcast_to(fuel[:, None, :], (n, HOURS, fuel.shape[1])),
        ],
        axis=-1,
    )
    rnn = np.concatenate([dm.price[t - 1], cal, fund.reshape(n, HOURS * n_fund), fuel], axis=-1)
    return FeatureSets(
        linear=np.ascontiguousarray(linear),
        rnn=rnn,
        targets=dm.price[t].copy(),
        day_index=t,
        dates=dm.dates[t],
    )


# --------------------------------------------------------------------------- standardization


@dataclass(frozen=True)
class Affine:
    """Column-wise z-score map ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x):
        return (np.asarray(x) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z) * self.std + self.mean


@dataclass(frozen=True)
class Standardizer:
    linear: Affine  # stats shaped (24, p)
    rnn: Affine  # stats shaped (D,)
    target: Affine  # stats shaped (24,)


def _column_stats(x: np.ndarray, what: str, degenerate: str):
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    # relative threshold keeps float noise on constant columns from passing as signal
    tiny = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
    if np.any(tiny):
        if degenerate == "raise":
            raise DegenerateColumn(f"{what}: {int(tiny.sum())} constant column(s) in the window")
        warnings.warn(
            f"{what}: {int(tiny.sum())} constant column(s); std clamped to 1",
            DegenerateFeatureWarning,
            stacklevel=3,
        )
        std = np.where(tiny, 1.0, std)
    return Affine(mean, std)


def fit_standardizer(fs: FeatureSets, rows, scalar_target: bool = False) -> Standardizer:
    """Fit feature and target statistics on ``rows`` of ``fs`` only."""
    rows = np.asarray(rows)
    if rows.size < 2:
        raise InsufficientHistory("standardization needs at least two rows")
    lin = _column_stats(fs.linear[rows], "linear features", "clamp")
    rnn = _column_stats(fs.rnn[rows], "recurrent features", "clamp")
    y = fs.targets[rows]
    if scalar_target:
        flat = y.reshape(-1, 1)
        st = _column_stats(flat, "target", "raise")
        target = Affine(np.full(HOURS, st.mean[0]), np.full(HOURS, st.std[0]))
    else:
        target = _column_stats(y, "target", "raise")
    return Standardizer(lin, rnn, target)


# --------------------------------------------------------------------------- splitting


def split(n_days: int, train: int, val: int, test: int | None = None) -> tuple[range, range, range]:
    """Contiguous train/validation/test index ranges covering ``n_days``.

    ``test=None`` takes the remainder.
    """
    if min(train, val) < 0 or (test is not None and test < 0):
        raise RangeError("split sizes must be non-negative")
    if test is None:
        test = n_days - train - val
        if test < 0:
            raise RangeError(f"train+val={train + val} exceeds {n_days} days")
    if train + val + test != n_days:
        raise RangeError(f"split {train}/{val}/{test} does not cover exactly {n_days} days")
    a, b = train, train + val
    return range(0, a), range(a, b), range(b, n_days)


def split_years(n_days: int, years=LONG_SPLIT_YEARS) -> tuple[range, range, range]:
    """Year-based split; the test range absorbs leftover days."""
    train, val, _ = (int(round(y * DAYS_PER_YEAR)) for y in years)
    return split(n_days, train, val)


# --------------------------------------------------------------------------- synthetic data


SCENARIOS = ("flat", "linear", "nonlinear", "mixed", "realistic")


@dataclass(frozen=True)
class ScenarioConfig:
    """Settings of the synthetic market generator.

    JSON schema (all keys optional)::

        {"scenario": "realistic", "seed": 0, "days": 730,
         "start": "2021-01-04", "noise": null, "spikes": true}

    ``noise`` overrides the scenario's price noise standard deviation in EUR/MWh.
    """

    scenario: str = "realistic"
    seed: int = 0
    days: int = 730
    start: str = "2021-01-04"
    noise: float | None = None
    spikes: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _ar1(rng, n, phi, sd):
    e = rng.normal(0.0, sd, n)
    out = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = phi * acc + e[i]
        out[i] = acc
    return out


def synth_generate(rng: np.random.Generator, days: int, scenario: ScenarioConfig | str = "realistic") -> HourlyPanel:
    """Synthetic hourly market with seasonal load, weather-driven renewables and fuels.

    Scenarios:

    ``flat``       constant drivers, price fixed at 50.
    ``linear``     price = 2 * load - wind (both in GWh), plus optional noise.
    ``nonlinear``  hockey-stick suppression of price by the daily wind level.
    ``mixed``      linear drivers, weekly autoregression and the wind hockey stick.
    ``realistic``  ``mixed`` with fuel pass-through, noise and occasional spikes.
    """
    if isinstance(scenario, str):
        scenario = ScenarioConfig(scenario=scenario, days=days)
    if scenario.scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario.scenario!r}; choose from {SCENARIOS}")
    if days < 30:
        raise ValueError("synthetic panels need at least 30 days")
    name = scenario.scenario
    n = days * HOURS
    start = pd.Timestamp(scenario.start).normalize()
    index = pd.date_range(start, periods=n, freq="h", name="timestamp")
    h = np.tile(np.arange(HOURS), days).reshape(days, HOURS)
    d = np.arange(days)[:, None]
    dow = ((start.dayofweek + np.arange(days)) % 7)[:, None]
    weekend = (dow >= 5).astype(float)

    if name == "flat":
        frame = pd.DataFrame(
            {
                "price": 50.0,
                "load_fc": 50000.0,
                "wind_onshore_fc": 10000.0,
                "wind_offshore_fc": 2000.0,
                "solar_fc": 0.0,
                "coal": 100.0,
                "gas": 30.0,
                "oil": 70.0,
                "eua": 80.0,
            },
            index=index,
        )
        return HourlyPanel(frame[list(COLUMNS)], np.zeros(n), "UTC")

    profile = np.sin(np.pi * np.clip(h - 5, 0, 17) / 17.0)
    season = np.cos(2 * np.pi * d / 365.0)
    load = (
        45000.0
        + 15000.0 * profile
        - 7000.0 * weekend
        + 4000.0 * season
        + 1500.0 * _ar1(rng, days, 0.7, 1.0)[:, None]
        + rng.normal(0.0, 800.0, (days, HOURS))
    )
    wind_level = _ar1(rng, days, 0.75, 0.66)  # roughly unit variance
    wind_total = 16000.0 * np.exp(0.55 * wind_level)[:, None] * (1.0 + 0.08 * rng.normal(size=(days, HOURS)))
    wind_total = np.maximum(wind_total, 0.0)
    wind_on = 0.85 * wind_total
    wind_off = wind_total - wind_on
    sunny = np.clip(0.55 + 0.25 * _ar1(rng, days, 0.5, 0.8), 0.05, 1.0)[:, None]
    solar = 24000.0 * np.maximum(0.0, np.sin(np.pi * (h - 6) / 12.0)) * sunny * (1.0 + 0.3 * season)

    def walk(level, vol):
        return level * np.exp(np.cumsum(rng.normal(0.0, vol, days)))

    coal, gas, oil, eua = walk(100.0, 0.015), walk(30.0, 0.025), walk(70.0, 0.015), walk(80.0, 0.015)
    fuel_frame = {
        "coal": np.repeat(coal, HOURS),
        "gas": np.repeat(gas, HOURS),
        "oil": np.repeat(oil, HOURS),
        "eua": np.repeat(eua, HOURS),
    }

    load_gw = load / 1000.0
    wind_gw = wind_total / 1000.0
    wz = (np.log(np.maximum(wind_total.mean(axis=1), 1.0) / 16000.0) / 0.55)[:, None]
    hour_amp = 0.6 + 0.4 * profile

    if name == "linear":
        noise = 0.0 if scenario.noise is None else scenario.noise
        price = 2.0 * load_gw - 1.0 * wind_gw + noise * rng.normal(size=(days, HOURS))
    elif name == "nonlinear":
        noise = 2.0 if scenario.noise is None else scenario.noise
        price = (
            60.0
            + 12.0 * profile
            - 6.0 * weekend
            + 45.0 * hour_amp * (np.maximum(0.0, 0.5 - wz) - np.maximum(0.0, wz - 0.5) * 0.2)
            - 25.0 * hour_amp * np.maximum(0.0, wz - 1.0)
            + noise * rng.normal(size=(days, HOURS))
        )
    else:
        noise = (3.0 if name == "mixed" else 6.0) if scenario.noise is None else scenario.noise
        base = (
            5.0
            + 0.9 * load_gw
            - 0.5 * wind_gw
            - 0.4 * solar / 1000.0
            + 0.6 * np.roll(gas, 2)[:, None]
            + 0.25 * np.roll(eua, 1)[:, None]
            - 4.0 * weekend
        )
        if name == "realistic":
            base = base + 0.1 * np.roll(coal, 2)[:, None]
        shock = 35.0 * hour_amp * np.maximum(0.0, 0.3 - wz)
        eps = noise * rng.normal(size=(days, HOURS))
        if name == "realistic" and scenario.spikes:
            spike = (rng.random((days, HOURS)) < 0.01) * rng.exponential(60.0, (days, HOURS))
            eps = eps + spike * profile
        price = np.empty((days, HOURS))
        for t in range(days):
            ar = 0.3 * (price[t - 7] - 60.0) if t >= 7 else 0.0
            price[t] = base[t] + shock[t] + ar + eps[t]

    frame = pd.DataFrame(
        {
            "price": price.ravel(),
            "load_fc": load.ravel(),
            "wind_onshore_fc": wind_on.ravel(),
            "wind_offshore_fc": wind_off.ravel(),
            "solar_fc": solar.ravel(),
            **fuel_frame,
        },
        index=index,
    )
    return HourlyPanel(frame[list(COLUMNS)], np.zeros(n), "UTC")


def write_panel_csv(panel: HourlyPanel, path):
    """Write a panel in the ingestion CSV format (ISO-8601 with offset)."""
    frame = panel.frame
    stamps = []
    for ts, off in zip(frame.index, panel.offsets):
        off = 0.0 if not np.isfinite(off) else off
        sign = "+" if off >= 0 else "-"
        a = int(abs(off))
        stamps.append(f"{ts:%Y-%m-%dT%H:%M:%S}{sign}{a // 60:02d}:{a % 60:02d}")
    out = frame.copy()
    out.insert(0, "timestamp", stamps)
    out.to_csv(path, index=False, float_format="%.17g", lineterminator="\r\n")
