import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signmfdfa.errors import (
    EmptyInput,
    MissingTimestamps,
    NonMonotonicTimestamps,
    NonPositivePrice,
    ParseError,
    UsageError,
)
from signmfdfa.series import (
    PriceSeries,
    ReturnSeries,
    SessionCalendar,
    SplitMix64,
    filter_overnight,
    fisher_yates_permutation,
    log_returns,
    read_series_csv,
    shuffle,
    write_series_csv,
)


def minutes(*stamps):
    return np.array(stamps, dtype="datetime64[m]").astype("datetime64[ns]")


def prices(values, start="2024-01-02T09:00"):
    ts = np.datetime64(start, "m") + np.arange(len(values)).astype("timedelta64[m]")
    return PriceSeries(ts, values)


# -- log_returns ------------------------------------------------------------

def test_constant_prices_give_zero_returns():
    r = log_returns(prices([100.0, 100.0, 100.0]))
    assert r.values.tolist() == [0.0, 0.0]


def test_one_to_e_is_unit_return():
    r = log_returns(prices([1.0, math.e]))
    assert r.values[0] == pytest.approx(1.0, abs=1e-15)


def test_hand_computed_returns():
    r = log_returns(prices([100.0, 102.0, 101.0]))
    np.testing.assert_allclose(r.values, [math.log(1.02), math.log(101 / 102)], rtol=0, atol=1e-14)


def test_return_timestamps_are_interval_ends():
    p = prices([1.0, 2.0, 3.0])
    r = log_returns(p)
    assert np.array_equal(r.origin_timestamps, p.timestamps[1:])
    assert np.array_equal(r.start_timestamps, p.timestamps[:-1])


@pytest.mark.parametrize("vals", [[], [5.0]])
def test_log_returns_needs_two_prices(vals):
    with pytest.raises(EmptyInput):
        log_returns(prices(vals))


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_non_positive_price_rejected(bad):
    with pytest.raises(NonPositivePrice):
        prices([1.0, bad, 2.0])


def test_timestamps_must_increase():
    with pytest.raises(NonMonotonicTimestamps):
        PriceSeries(minutes("2024-01-02T09:01", "2024-01-02T09:00"), [1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.1, 0.1), min_size=1, max_size=200))
def test_log_returns_inverts_cumulative_exponentiation(rets):
    r = np.array(rets)
    p = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(r)]))
    back = log_returns(prices(p)).values
    np.testing.assert_allclose(back, r, rtol=1e-12, atol=1e-12)


# -- filter_overnight -------------------------------------------------------

XETRA = SessionCalendar.parse("mon-fri 09:00 17:30")


def three_day_fixture():
    """Day 1 09:00-09:10, days 2 and 3 09:00-09:09, one-minute ticks: 31 prices."""
    stamps = []
    for day, count in (("2024-01-02", 11), ("2024-01-03", 10), ("2024-01-04", 10)):
        base = np.datetime64(f"{day}T09:00", "m")
        stamps += list(base + np.arange(count).astype("timedelta64[m]"))
    ts = np.array(stamps, dtype="datetime64[ns]")
    p = 100 + np.arange(len(ts), dtype=float)
    return PriceSeries(ts, p)


def test_three_day_fixture_brute_force_count():
    r = log_returns(three_day_fixture())
    assert len(r) == 30
    crossing = sum(
        1
        for a, b in zip(r.start_timestamps, r.origin_timestamps)
        if a.astype("datetime64[D]") != b.astype("datetime64[D]")
    )
    assert crossing == 2
    for cal in (XETRA, None):
        out = filter_overnight(r, cal)
        assert len(out) == 30 - crossing == 28
        assert out.meta.removed_count == 2
        assert out.meta.overnight_removed


def test_intrasession_returns_kept():
    p = PriceSeries(minutes("2024-01-02T10:00", "2024-01-02T10:01", "2024-01-02T10:02"), [1.0, 2.0, 3.0])
    out = filter_overnight(log_returns(p), XETRA)
    assert len(out) == 2


def test_close_to_next_open_removed():
    ts = minutes("2024-01-02T17:29", "2024-01-02T17:30", "2024-01-03T09:00", "2024-01-03T09:01")
    r = log_returns(PriceSeries(ts, [1.0, 2.0, 3.0, 4.0]))
    out = filter_overnight(r, XETRA)
    assert len(out) == 2
    assert not np.any(out.start_timestamps == ts[1])


def test_weekend_gap_removed_like_overnight():
    ts = minutes("2024-01-05T17:29", "2024-01-05T17:30", "2024-01-08T09:00", "2024-01-08T09:01")
    out = filter_overnight(log_returns(PriceSeries(ts, [1.0, 2.0, 3.0, 4.0])), XETRA)
    assert len(out) == 2


def test_intraday_halt_removed_by_gap_rule():
    ts = minutes(*[f"2024-01-02T10:{m:02d}" for m in (0, 1, 2, 3, 30, 31, 32)])
    r = log_returns(PriceSeries(ts, np.arange(1.0, 8.0)))
    assert len(filter_overnight(r, XETRA)) == 5
    assert len(filter_overnight(r, XETRA, gap_factor=50)) == 6


def test_filter_is_idempotent():
    r = log_returns(three_day_fixture())
    for cal in (XETRA, None):
        once = filter_overnight(r, cal)
        twice = filter_overnight(once, cal)
        assert np.array_equal(once.values, twice.values)
        assert np.array_equal(once.origin_timestamps, twice.origin_timestamps)


def test_filter_needs_timestamps():
    with pytest.raises(MissingTimestamps):
        filter_overnight(ReturnSeries(np.ones(3)), XETRA)


def test_calendar_parsing():
    cal = SessionCalendar.parse("# exchange hours\nmon-thu 09:00 17:30\nfri 09:00 14:00\n")
    assert cal.sessions[0] == (540, 1050)
    assert cal.sessions[4] == (540, 840)
    assert 5 not in cal.sessions
    with pytest.raises(UsageError):
        SessionCalendar.parse("mon 9am 5pm")


# -- shuffle ----------------------------------------------------------------

def test_splitmix64_reference_vector():
    rng = SplitMix64(0)
    assert [rng.next() for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


def test_single_element_shuffle():
    assert shuffle(ReturnSeries([5.0]), 123).values.tolist() == [5.0]


def test_shuffle_is_deterministic():
    r = ReturnSeries(np.arange(100.0))
    assert np.array_equal(shuffle(r, 42).values, shuffle(r, 42).values)
    assert not np.array_equal(shuffle(r, 42).values, shuffle(r, 43).values)


def test_shuffle_fixed_permutation():
    # traced by hand from the first three SplitMix64(0) outputs
    out = shuffle(ReturnSeries([1.0, 2.0, 3.0, 4.0]), 0)
    assert out.values.tolist() == [3.0, 1.0, 2.0, 4.0]
    assert sorted(out.values) == [1.0, 2.0, 3.0, 4.0]
    assert out.meta.shuffled and out.meta.shuffle_seed == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=300), st.integers(0, 2**64 - 1))
def test_shuffle_preserves_multiset(vals, seed):
    r = ReturnSeries(vals)
    out = shuffle(r, seed)
    assert sorted(out.values.tolist()) == sorted(r.values.tolist())
    assert np.mean(np.sort(out.values)) == np.mean(np.sort(r.values))
    assert np.var(np.sort(out.values)) == np.var(np.sort(r.values))


def test_fisher_yates_is_uniform_on_three_items():
    counts = {}
    for seed in range(6000):
        key = tuple(fisher_yates_permutation(3, seed))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    # each of 6 permutations expects 1000; 5 sigma is ~144
    assert all(abs(c - 1000) < 150 for c in counts.values())


# -- CSV --------------------------------------------------------------------

def test_csv_header_detection_and_delimiters(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("timestamp;price\n2024-01-02T09:00:00;100\n2024-01-02T09:01:00;101.5\n")
    p = read_series_csv(f)
    assert p.prices.tolist() == [100.0, 101.5]
    g = tmp_path / "b.csv"
    g.write_text("0,1.0\n60,2.0\n120,4.0\n")
    p = read_series_csv(g)
    assert len(p) == 3
    assert (p.timestamps[1] - p.timestamps[0]) == np.timedelta64(60, "s")


def test_csv_iso_with_zulu(tmp_path):
    f = tmp_path / "z.csv"
    f.write_text("2024-01-02T09:00:00Z,1\n2024-01-02T09:00:30.5Z,2\n")
    p = read_series_csv(f)
    assert p.timestamps[1] - p.timestamps[0] == np.timedelta64(30500, "ms")


def test_csv_empty_and_malformed(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("")
    with pytest.raises(EmptyInput):
        read_series_csv(f)
    f.write_text("timestamp,price\n")
    with pytest.raises(EmptyInput):
        read_series_csv(f)
    f.write_text("1,2,3\n")
    with pytest.raises(ParseError):
        read_series_csv(f)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_subnormal=True), min_size=1, max_size=50))
def test_series_csv_round_trip(tmp_path_factory, vals):
    f = tmp_path_factory.mktemp("rt") / "r.csv"
    r = ReturnSeries.from_values(vals)
    write_series_csv(f, r)
    back = read_series_csv(f, kind="returns")
    assert np.array_equal(back.values, r.values)
    assert np.array_equal(back.origin_timestamps, r.origin_timestamps)
