import datetime as dt
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmm_forecast.errors import (
    ArchiveFormatError,
    ArgumentError,
    EmptyArchiveError,
    InsufficientDataError,
    SchemaError,
)
from hmm_forecast.market_data import (
    StockBar,
    SymbolSeries,
    chronological_split,
    clean,
    load_csv,
    load_json_archive,
    load_symbol,
    write_csv,
)

from conftest import aci_bars
from synthetic import random_walk_series


def _bar(day, o=100.0, h=101.0, l=99.0, c=100.5, v=1000, prev=None):
    return StockBar(dt.date(2020, 1, 1) + dt.timedelta(days=day), o, h, l, c, v, prev)


class TestLoadJsonArchive:
    def test_aci_sample_collapses_duplicate(self, aci_archive):
        (series,) = load_json_archive(aci_archive)
        assert series.symbol == "ACI"
        assert len(series) == 4
        assert [b.date.isoformat() for b in series.bars] == [
            "2008-03-06", "2008-03-09", "2008-03-10", "2008-03-11"
        ]
        assert series.bars[0].prev_close == 198.8

    def test_two_symbols_one_bad_record(self, tmp_path):
        def rec(sym, day, **kw):
            r = {"symbol": sym, "date": f"2020-01-0{day}", "open": 10, "high": 11,
                 "low": 9, "close": 10.5, "volume": 100}
            r.update(kw)
            return r

        rows = [rec("AAA", d) for d in (1, 2, 3)] + [rec("BBB", d) for d in (1, 2, 3)]
        del rows[4]["volume"]
        (tmp_path / "a.json").write_text(json.dumps(rows))
        result = load_json_archive(tmp_path)
        assert [s.symbol for s in result] == ["AAA", "BBB"]
        assert sum(len(s) for s in result) == 5
        assert sum(s.skipped for s in result) == 1
        assert result[1].skipped == 1

    def test_symbol_from_file_stem(self, tmp_path):
        rows = [{"date": "2020-01-02", "open": 10, "high": 11, "low": 9, "close": 10, "volume": 5}]
        (tmp_path / "GP.json").write_text(json.dumps(rows))
        (series,) = load_json_archive(tmp_path)
        assert series.symbol == "GP"

    def test_dsebd_field_names(self, tmp_path):
        rows = [{"trading_code": "ACI", "date": "2020-01-02T00:00:00", "opening_price": 10,
                 "high": 11, "low": 9, "closing_price": 10.5, "volume": 5,
                 "yesterdays_closing_price": 9.9}]
        (tmp_path / "x.json").write_text(json.dumps(rows))
        (series,) = load_json_archive(tmp_path)
        bar = series.bars[0]
        assert (series.symbol, bar.open, bar.close, bar.prev_close) == ("ACI", 10.0, 10.5, 9.9)
        assert bar.date == dt.date(2020, 1, 2)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(EmptyArchiveError, match="empty-archive"):
            load_json_archive(tmp_path)

    def test_missing_path(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_json_archive(tmp_path / "nope")

    def test_invalid_json_names_file(self, tmp_path):
        (tmp_path / "broken.json").write_text("[{")
        with pytest.raises(ArchiveFormatError, match="broken.json"):
            load_json_archive(tmp_path)

    def test_deterministic(self, aci_archive):
        assert load_json_archive(aci_archive) == load_json_archive(aci_archive)


class TestLoadCsv:
    def test_aci_sample(self, aci_csv):
        series = load_csv(aci_csv, "ACI")
        assert len(series) == 4
        assert series.bars[-1].close == 215.5

    def test_header_only(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("date,open,high,low,close,volume\n")
        assert len(load_csv(path, "E")) == 0

    def test_non_numeric_close_skipped(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text(
            "date,open,high,low,close,volume\n"
            "2020-01-01,10,11,9,10,1\n"
            "2020-01-02,10,11,9,abc,1\n"
            "2020-01-03,10,11,9,10,1\n"
            "2020-01-04,10,11,9,10,1\n"
        )
        series = load_csv(path, "X")
        assert len(series) == 3
        assert series.skipped == 1

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("date,open,high,low,volume\n2020-01-01,1,1,1,1\n")
        with pytest.raises(SchemaError, match="'close'"):
            load_csv(path, "X")

    def test_unsorted_rows_sorted(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text(
            "date,open,high,low,close,volume\n"
            "2020-01-03,10,11,9,10,1\n"
            "2020-01-01,10,11,9,10,1\n"
        )
        assert [b.date.day for b in load_csv(path, "X").bars] == [1, 3]

    def test_write_then_load_roundtrip(self, tmp_path, aci_series):
        path = tmp_path / "out.csv"
        expected = clean(aci_series)
        write_csv(expected, path)
        assert load_csv(path, "ACI") == expected

    def test_load_symbol_resolves_directory(self, tmp_path, aci_csv):
        assert len(load_symbol(aci_csv.parent, "ACI")) == 4


class TestClean:
    def test_aci_five_rows_to_four(self, aci_series):
        assert len(aci_series) == 5
        assert len(clean(aci_series)) == 4

    @pytest.mark.parametrize("bad", [
        dict(h=math.inf),
        dict(o=math.nan),
        dict(l=100.2, o=100.0),   # low above open
        dict(h=99.5),             # high below open
        dict(o=0.0, l=0.0),
        dict(o=-1.0, l=-2.0),
        dict(c=0.0, l=0.0),
        dict(o=2e12, h=3e12, c=2e12),
        dict(v=-5),
    ])
    def test_invalid_bar_removed(self, bad):
        series = SymbolSeries("X", [_bar(0), _bar(1, **bad), _bar(2)])
        out = clean(series)
        assert [b.date.day for b in out.bars] == [1, 3]

    def test_same_date_different_values_kept(self, caplog):
        series = SymbolSeries("X", [_bar(0), _bar(0, c=100.7)])
        assert len(clean(series)) == 2
        assert "share date" in caplog.text

    @settings(max_examples=60, deadline=None)
    @given(st.lists(
        st.tuples(
            st.integers(0, 20),
            st.floats(-10, 300) | st.sampled_from([math.nan, math.inf, -math.inf]),
            st.floats(-10, 300),
            st.floats(-10, 300),
            st.floats(-10, 300),
            st.integers(-1, 3),
        ),
        max_size=30,
    ))
    def test_idempotent_and_invariants(self, rows):
        bars = [_bar(d, o, h, l, c, v) for d, o, h, l, c, v in rows]
        once = clean(SymbolSeries("X", bars))
        assert clean(once) == once
        for b in once.bars:
            assert b.open > 0
            assert all(math.isfinite(p) for p in (b.open, b.high, b.low, b.close))
            assert b.low <= min(b.open, b.close) <= max(b.open, b.close) <= b.high
        assert [b.date for b in once.bars] == sorted(b.date for b in once.bars)


class TestChronologicalSplit:
    def test_ten_bars(self):
        split = chronological_split(random_walk_series(10), 0.8)
        assert (len(split.train), len(split.test)) == (8, 2)
        assert max(split.train.dates) < min(split.test.dates)

    def test_minimal(self):
        split = chronological_split(random_walk_series(2), 0.5)
        assert (len(split.train), len(split.test)) == (1, 1)

    def test_thirteen_bars_floor(self):
        split = chronological_split(random_walk_series(13), 0.8)
        assert (len(split.train), len(split.test)) == (10, 3)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            chronological_split(random_walk_series(1), 0.8)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.2, 1.5])
    def test_fraction_out_of_range(self, frac):
        with pytest.raises(ArgumentError):
            chronological_split(random_walk_series(5), frac)

    def test_aci_rows_order_preserved(self):
        series = clean(SymbolSeries("ACI", aci_bars()))
        split = chronological_split(series, 0.5)
        assert split.train.bars + split.test.bars == series.bars
