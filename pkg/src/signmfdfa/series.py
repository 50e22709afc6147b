"""Price and return series: ingestion, log-returns, overnight filtering, shuffling.

Timestamps are held as ``datetime64[ns]`` arrays and interpreted as exchange
wall-clock time. Epoch-second inputs map onto the same axis (1970-01-01 UTC).
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInput,
    MissingTimestamps,
    NonFiniteValue,
    NonMonotonicTimestamps,
    NonPositivePrice,
    ParseError,
    UsageError,
)

__all__ = [
    "PriceSeries",
    "ReturnSeries",
    "ReturnMeta",
    "SessionCalendar",
    "SplitMix64",
    "log_returns",
    "filter_overnight",
    "shuffle",
    "fisher_yates_permutation",
    "read_series_csv",
    "write_series_csv",
    "parse_timestamps",
]

_NS = np.timedelta64(1, "ns")
_MASK64 = (1 << 64) - 1


def _frozen(a, dtype=None) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


# -- calendar ---------------------------------------------------------------

_WEEKDAYS = {"mon": 0, "tue": 1, "wed": 2, "thu": 3, "fri": 4, "sat": 5, "sun": 6}
_HHMM = re.compile(r"^(\d{1,2}):(\d{2})$")


def _minutes(text: str) -> int:
    m = _HHMM.match(text)
    if not m or int(m.group(1)) > 24 or int(m.group(2)) > 59:
        raise UsageError(f"bad HH:MM time {text!r}")
    return int(m.group(1)) * 60 + int(m.group(2))


@dataclass(frozen=True)
class SessionCalendar:
    """Daily trading windows keyed by weekday (Monday = 0).

    Each entry maps a weekday to ``(open, close)`` in minutes after midnight.
    Weekdays absent from the mapping have no session.
    """

    sessions: dict[int, tuple[int, int]]

    def __post_init__(self):
        for day, (open_, close) in self.sessions.items():
            if day not in range(7) or not 0 <= open_ < close <= 24 * 60:
                raise UsageError(f"invalid session {day}: {open_}-{close}")

    @classmethod
    def parse(cls, text: str) -> "SessionCalendar":
        """Parse lines of ``<day> HH:MM HH:MM``.

        ``<day>`` is a three-letter weekday, a range such as ``mon-fri``, or
        ``*`` for all seven days. ``#`` starts a comment.
        """
        sessions: dict[int, tuple[int, int]] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise UsageError(f"calendar line {lineno}: expected '<day> HH:MM HH:MM'")
            days = _parse_days(parts[0].lower(), lineno)
            window = (_minutes(parts[1]), _minutes(parts[2]))
            for d in days:
                sessions[d] = window
        if not sessions:
            raise UsageError("calendar defines no sessions")
        return cls(sessions)

    @classmethod
    def from_file(cls, path: str | Path) -> "SessionCalendar":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read calendar {path}: {exc.strerror}") from None
        return cls.parse(text)

    def session_keys(self, timestamps: np.ndarray) -> np.ndarray:
        """Day number of the session containing each instant, or -1 if none."""
        ts = np.asarray(timestamps, dtype="datetime64[ns]")
        days = ts.astype("datetime64[D]")
        minute = (ts - days) / np.timedelta64(1, "m")
        daynum = days.astype(np.int64)
        weekday = (daynum + 3) % 7  # 1970-01-01 was a Thursday
        opens = np.full(7, np.inf)
        closes = np.full(7, -np.inf)
        for d, (o, c) in self.sessions.items():
            opens[d], closes[d] = o, c
        inside = (minute >= opens[weekday]) & (minute <= closes[weekday])
        return np.where(inside, daynum, -1)


def _parse_days(token: str, lineno: int) -> list[int]:
    if token == "*":
        return list(range(7))
    if "-" in token:
        a, b = token.split("-", 1)
        if a in _WEEKDAYS and b in _WEEKDAYS and _WEEKDAYS[a] <= _WEEKDAYS[b]:
            return list(range(_WEEKDAYS[a], _WEEKDAYS[b] + 1))
    elif token in _WEEKDAYS:
        return [_WEEKDAYS[token]]
    raise UsageError(f"calendar line {lineno}: bad weekday {token!r}")


# -- series types -----------------------------------------------------------

@dataclass(frozen=True)
class PriceSeries:
    timestamps: np.ndarray
    prices: np.ndarray
    session_calendar: SessionCalendar | None = None

    def __post_init__(self):
        ts = _frozen(self.timestamps, "datetime64[ns]")
        p = _frozen(self.prices, float)
        if ts.ndim != 1 or p.ndim != 1 or len(ts) != len(p):
            raise ParseError("timestamps and prices must be 1-d and of equal length")
        if len(ts) > 1 and not np.all(ts[1:] > ts[:-1]):
            raise NonMonotonicTimestamps("timestamps must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise NonFiniteValue("prices contain NaN or infinity")
        if np.any(p <= 0):
            i = int(np.argmax(p <= 0))
            raise NonPositivePrice(f"price at row {i} is {p[i]!r}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", p)

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True)
class ReturnMeta:
    overnight_removed: bool = False
    removed_count: int = 0
    sampling_interval_ns: int | None = None
    shuffled: bool = False
    shuffle_seed: int | None = None


@dataclass(frozen=True)
class ReturnSeries:
    """Log-returns with optional interval bounds.

    ``origin_timestamps[i]`` is the instant the i-th return is realised (the
    end of its interval); ``start_timestamps[i]`` is the interval start.
    """

    values: np.ndarray
    origin_timestamps: np.ndarray | None = None
    start_timestamps: np.ndarray | None = None
    meta: ReturnMeta = field(default_factory=ReturnMeta)

    def __post_init__(self):
        v = _frozen(self.values, float)
        if v.ndim != 1:
            raise ParseError("return values must be 1-d")
        if len(v) < 1:
            raise EmptyInput("return series is empty")
        if not np.all(np.isfinite(v)):
            raise NonFiniteValue("return series contains NaN or infinity")
        object.__setattr__(self, "values", v)
        for name in ("origin_timestamps", "start_timestamps"):
            ts = getattr(self, name)
            if ts is not None:
                ts = _frozen(ts, "datetime64[ns]")
                if ts.shape != v.shape:
                    raise ParseError(f"{name} not aligned with values")
                object.__setattr__(self, name, ts)

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_values(cls, values: Sequence[float] | np.ndarray) -> "ReturnSeries":
        """Wrap bare values, stamping them at unit-second spacing from the epoch."""
        v = np.asarray(values, dtype=float)
        ends = np.arange(1, len(v) + 1, dtype=np.int64).astype("datetime64[s]")
        return cls(v, ends, ends - np.timedelta64(1, "s"))


# -- operations -------------------------------------------------------------

def log_returns(prices: PriceSeries) -> ReturnSeries:
    p = np.asarray(prices.prices, dtype=float)
    if len(p) < 2:
        raise EmptyInput(f"need at least 2 prices, got {len(p)}")
    if np.any(p <= 0):
        raise NonPositivePrice("prices must be strictly positive")
    lp = np.log(p)
    return ReturnSeries(
        values=lp[1:] - lp[:-1],
        origin_timestamps=prices.timestamps[1:],
        start_timestamps=prices.timestamps[:-1],
    )


def filter_overnight(
    returns: ReturnSeries,
    calendar: SessionCalendar | None = None,
    *,
    gap_factor: float = 5.0,
    sampling_interval: np.timedelta64 | float | None = None,
) -> ReturnSeries:
    """Drop returns whose interval crosses a session boundary or is too long.

    An interval is too long when it exceeds ``gap_factor`` times the sampling
    interval. Without an explicit ``sampling_interval`` (seconds or a
    timedelta) the median interval length is used and recorded in the result's
    meta, so a second pass applies the identical threshold.
    """
    if returns.start_timestamps is None or returns.origin_timestamps is None:
        raise MissingTimestamps("overnight filtering needs return interval timestamps")
    if gap_factor <= 1:
        raise UsageError("gap_factor must exceed 1")
    start = returns.start_timestamps
    end = returns.origin_timestamps
    gaps = (end - start) / _NS
    if sampling_interval is None:
        if returns.meta.sampling_interval_ns is not None:
            step_ns = returns.meta.sampling_interval_ns
        else:
            step_ns = int(np.median(gaps))
    elif isinstance(sampling_interval, np.timedelta64):
        step_ns = int(sampling_interval / _NS)
    else:
        step_ns = int(round(float(sampling_interval) * 1e9))
    if step_ns <= 0:
        raise UsageError("sampling interval must be positive")

    drop = gaps > gap_factor * step_ns
    if calendar is not None:
        k0 = calendar.session_keys(start)
        k1 = calendar.session_keys(end)
        drop |= (k0 < 0) | (k0 != k1)
    keep = ~drop
    if not keep.any():
        raise EmptyInput("every return was removed as overnight")
    meta = replace(
        returns.meta,
        overnight_removed=True,
        removed_count=returns.meta.removed_count + int(drop.sum()),
        sampling_interval_ns=step_ns,
    )
    return ReturnSeries(returns.values[keep], end[keep], start[keep], meta)


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood), 64-bit state and output.

    Chosen because its output stream is fixed by a few lines of integer
    arithmetic and never changes between library versions.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise UsageError("seed must be a non-negative integer")
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via Lemire's multiply-and-reject."""
        m = self.next() * n
        low = m & _MASK64
        if low < n:
            threshold = ((1 << 64) - n) % n
            while low < threshold:
                m = self.next() * n
                low = m & _MASK64
        return m >> 64


def fisher_yates_permutation(n: int, seed: int) -> np.ndarray:
    """Permutation of ``range(n)`` by Durstenfeld's Fisher-Yates, SplitMix64 driven."""
    rng = SplitMix64(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.intp)


def shuffle(returns: ReturnSeries, seed: int) -> ReturnSeries:
    """Seeded uniform permutation of the return values.

    Timestamps stay in place; only the values move.
    """
    perm = fisher_yates_permutation(len(returns), int(seed))
    meta = replace(returns.meta, shuffled=True, shuffle_seed=int(seed))
    return ReturnSeries(
        returns.values[perm], returns.origin_timestamps, returns.start_timestamps, meta
    )


# -- CSV --------------------------------------------------------------------

_TZ_SUFFIX = re.compile(r"(Z|z|[+-]\d{2}:?\d{2})$")


def _parse_iso(text: str) -> np.datetime64:
    # offsets are dropped: the wall-clock reading is taken as exchange time
    s = _TZ_SUFFIX.sub("", text.strip())
    if len(s) > 10 and not re.search(r"\d{2}:\d{2}", s[10:]):
        raise ParseError(f"unparseable timestamp {text!r}")
    try:
        return np.datetime64(s, "ns")
    except ValueError:
        raise ParseError(f"unparseable timestamp {text!r}") from None


def parse_timestamps(fields: Sequence[str]) -> np.ndarray:
    """Epoch seconds if every field is numeric, ISO-8601 otherwise."""
    try:
        secs = [float(f) for f in fields]
    except ValueError:
        return np.array([_parse_iso(f) for f in fields], dtype="datetime64[ns]")
    ns = np.array([round(s * 1e9) for s in secs], dtype=np.int64)
    return ns.astype("datetime64[ns]")


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_series_csv(
    path: str | Path,
    kind: str = "prices",
    delimiter: str | None = None,
    calendar: SessionCalendar | None = None,
) -> PriceSeries | ReturnSeries:
    """Read a two-column ``timestamp,price`` (or ``timestamp,value``) file.

    A header row is detected when its second field is not numeric. With
    ``delimiter=None`` a semicolon is used if the first line has one and no
    comma.
    """
    if kind not in ("prices", "returns"):
        raise UsageError(f"unknown input kind {kind!r}")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyInput(f"{path} contains no rows")
    if delimiter is None:
        delimiter = ";" if (";" in lines[0] and "," not in lines[0]) else ","
    rows = list(csv.reader(lines, delimiter=delimiter))
    if len(rows[0]) >= 2 and not _looks_numeric(rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise EmptyInput(f"{path} contains only a header")
    for i, r in enumerate(rows):
        if len(r) != 2:
            raise ParseError(f"row {i + 1}: expected 2 fields, got {len(r)}")
    ts = parse_timestamps([r[0] for r in rows])
    try:
        vals = np.array([float(r[1]) for r in rows])
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if kind == "prices":
        return PriceSeries(ts, vals, calendar)
    if len(ts) > 1 and not np.all(ts[1:] > ts[:-1]):
        raise NonMonotonicTimestamps("timestamps must be strictly increasing")
    step = np.median(np.diff(ts)) if len(ts) > 1 else np.timedelta64(1, "s")
    starts = np.concatenate([ts[:1] - step, ts[:-1]])
    return ReturnSeries(vals, ts, starts)


def _format_ts(ns: int) -> str:
    secs, rem = divmod(int(ns), 1_000_000_000)
    return str(secs) if rem == 0 else f"{secs}.{rem:09d}".rstrip("0")


def write_series_csv(
    path: str | Path, series: PriceSeries | ReturnSeries, delimiter: str = ","
) -> None:
    """Write a series in the format :func:`read_series_csv` ingests.

    Timestamps are written as epoch seconds, values with ``repr`` so the file
    reads back bit-for-bit.
    """
    if isinstance(series, PriceSeries):
        ts, vals, header = series.timestamps, series.prices, "price"
    else:
        ts = series.origin_timestamps
        if ts is None:
            ts = np.arange(1, len(series) + 1).astype("datetime64[s]")
        vals, header = series.values, "value"
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(["timestamp", header])
    for t, v in zip(np.asarray(ts, "datetime64[ns]").astype(np.int64), vals):
        w.writerow([_format_ts(t), repr(float(v))])
    Path(path).write_text(buf.getvalue())
