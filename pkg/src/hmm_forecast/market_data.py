"""Loading, cleaning and splitting daily OHLCV histories.

Two on-disk sources are supported: a JSON archive (a directory of files,
each an array of daily records) and a flat per-symbol CSV file. Both
loaders return bars sorted by date with exact duplicate rows collapsed;
``clean`` then enforces the price invariants the feature extractors rely on.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    ArchiveFormatError,
    ArgumentError,
    DataError,
    EmptyArchiveError,
    InsufficientDataError,
    SchemaError,
)

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "open", "high", "low", "close", "volume")
CSV_COLUMNS = REQUIRED_COLUMNS + ("prev_close",)

# Prices above this magnitude are treated as corrupt ("too big for float64").
MAX_PRICE = 1e12

# Alternative field names accepted in JSON records (DSEBD uses the long forms).
_FIELD_ALIASES = {
    "symbol": ("symbol", "trading_code", "ticker"),
    "date": ("date",),
    "open": ("open", "opening_price"),
    "high": ("high",),
    "low": ("low",),
    "close": ("close", "closing_price"),
    "volume": ("volume",),
    "prev_close": ("prev_close", "yesterdays_closing_price"),
}


@dataclass(frozen=True)
class StockBar:
    """One trading day for one symbol."""

    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: int
    prev_close: float | None = None

    @property
    def key(self):
        # identity used for duplicate detection; prev_close deliberately excluded
        return (self.date, self.open, self.high, self.low, self.close, self.volume)

    def is_valid(self) -> bool:
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and 0 < p <= MAX_PRICE for p in prices):
            return False
        if self.prev_close is not None and not math.isfinite(self.prev_close):
            return False
        if self.volume < 0:
            return False
        return self.low <= min(self.open, self.close) and self.high >= max(self.open, self.close)


@dataclass(frozen=True)
class SymbolSeries:
    """Chronologically ordered bars of a single symbol.

    ``skipped`` counts source records that could not be parsed; it does not
    take part in equality comparisons.
    """

    symbol: str
    bars: tuple[StockBar, ...]
    skipped: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))

    def __len__(self):
        return len(self.bars)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return SymbolSeries(self.symbol, self.bars[item])
        return self.bars[item]

    @property
    def dates(self) -> list[dt.date]:
        return [b.date for b in self.bars]

    @property
    def closes(self) -> list[float]:
        return [b.close for b in self.bars]


@dataclass(frozen=True)
class SplitSeries:
    train: SymbolSeries
    test: SymbolSeries


def parse_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    text = str(value).strip()
    # tolerate a trailing time component such as "2008-03-06T00:00:00"
    return dt.date.fromisoformat(text[:10])


def _parse_float(value) -> float:
    if value is None or isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, str):
        value = value.strip()
        if not value:
            raise ValueError("empty cell")
    return float(value)


def _parse_volume(value) -> int:
    number = _parse_float(value)
    if not math.isfinite(number) or number != int(number):
        raise ValueError(f"volume is not an integer: {value!r}")
    return int(number)


def make_bar(record) -> StockBar:
    """Build a bar from a mapping with the canonical field names.

    Raises ``KeyError`` or ``ValueError`` when a field is absent or unparseable.
    """
    prev = record.get("prev_close")
    prev_close = None if prev in (None, "") else _parse_float(prev)
    return StockBar(
        date=parse_date(record["date"]),
        open=_parse_float(record["open"]),
        high=_parse_float(record["high"]),
        low=_parse_float(record["low"]),
        close=_parse_float(record["close"]),
        volume=_parse_volume(record["volume"]),
        prev_close=prev_close,
    )


def _sort_and_dedup(bars: Iterable[StockBar], symbol: str = "") -> tuple[StockBar, ...]:
    seen = set()
    unique = []
    for bar in bars:
        if bar.key in seen:
            continue
        seen.add(bar.key)
        unique.append(bar)
    unique.sort(key=lambda b: b.date)  # stable: same-date rows keep source order
    for prev, cur in zip(unique, unique[1:]):
        if prev.date == cur.date:
            logger.warning("%s: two different rows share date %s; keeping both", symbol, cur.date)
    return tuple(unique)


def _canonical_record(raw: dict) -> dict:
    out = {}
    for name, aliases in _FIELD_ALIASES.items():
        for alias in aliases:
            if alias in raw:
                out[name] = raw[alias]
                break
    return out


def _archive_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() == ".json" and p.is_file())
    return [path]


def load_json_archive(path) -> list[SymbolSeries]:
    """Load every symbol found in a JSON archive.

    ``path`` is either a directory of ``*.json`` files or a single file. Each
    file holds an array of objects with date/open/high/low/close/volume
    fields. The symbol comes from a ``symbol`` (or ``trading_code``) field
    when present, otherwise from the file name stem. Records that fail to
    parse are skipped and counted on the resulting series.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"archive not found: {path}")

    grouped: dict[str, list[StockBar]] = defaultdict(list)
    skipped: dict[str, int] = defaultdict(int)
    for file in _archive_files(path):
        try:
            with open(file, encoding="utf-8") as fh:
                payload = json.load(fh)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ArchiveFormatError(file, exc) from exc
        if not isinstance(payload, list):
            raise ArchiveFormatError(file, "top-level value must be an array of records")
        for raw in payload:
            if not isinstance(raw, dict):
                skipped[file.stem] += 1
                continue
            record = _canonical_record(raw)
            symbol = str(record.get("symbol") or file.stem).strip()
            try:
                grouped[symbol].append(make_bar(record))
            except (KeyError, ValueError, TypeError):
                skipped[symbol] += 1

    if not grouped:
        raise EmptyArchiveError(f"empty-archive: no parseable records under {path}")
    series = [
        SymbolSeries(sym, _sort_and_dedup(bars, sym), skipped=skipped.get(sym, 0))
        for sym, bars in sorted(grouped.items())
    ]
    total_skipped = sum(skipped.values())
    if total_skipped:
        logger.info("skipped %d unparseable record(s) in %s", total_skipped, path)
    return series


def load_csv(path, symbol: str) -> SymbolSeries:
    """Load one symbol from a CSV with a ``date,open,high,low,close,volume`` header."""
    path = Path(path)
    bars = []
    skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip().lower() for h in (reader.fieldnames or [])]
        for column in REQUIRED_COLUMNS:
            if column not in header:
                raise SchemaError(column, path)
        reader.fieldnames = header
        for row in reader:
            try:
                bars.append(make_bar(row))
            except (KeyError, ValueError, TypeError):
                skipped += 1
    if skipped:
        logger.info("%s: skipped %d unparseable row(s)", path, skipped)
    return SymbolSeries(symbol, _sort_and_dedup(bars, symbol), skipped=skipped)


def _format_number(value) -> str:
    return repr(float(value))


def write_csv(series: SymbolSeries, path) -> None:
    """Write ``series`` in the format read by :func:`load_csv`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for b in series.bars:
            writer.writerow([
                b.date.isoformat(),
                _format_number(b.open),
                _format_number(b.high),
                _format_number(b.low),
                _format_number(b.close),
                str(b.volume),
                "" if b.prev_close is None else _format_number(b.prev_close),
            ])


def clean(series: SymbolSeries) -> SymbolSeries:
    """Drop bars that violate the price invariants, then collapse exact duplicates.

    A surviving bar has finite prices in ``(0, MAX_PRICE]``, a non-negative
    volume and ``low <= min(open, close) <= max(open, close) <= high``.
    """
    kept = [b for b in series.bars if b.is_valid()]
    dropped = len(series.bars) - len(kept)
    if dropped:
        logger.info("%s: removed %d invalid bar(s)", series.symbol, dropped)
    return SymbolSeries(series.symbol, _sort_and_dedup(kept, series.symbol), skipped=series.skipped)


def chronological_split(series: SymbolSeries, train_fraction: float = 0.8) -> SplitSeries:
    """Split without shuffling: the first ``floor(fraction * n)`` bars train."""
    if not 0.0 < train_fraction < 1.0:
        raise ArgumentError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(series.bars)
    if n < 2:
        raise InsufficientDataError(f"{series.symbol}: need at least 2 bars to split, have {n}")
    # the epsilon absorbs products such as 0.57 * 100 == 56.99999999999999
    n_train = math.floor(train_fraction * n + 1e-9)
    return SplitSeries(
        train=SymbolSeries(series.symbol, series.bars[:n_train]),
        test=SymbolSeries(series.symbol, series.bars[n_train:]),
    )


def find_series(all_series: Sequence[SymbolSeries], symbol: str) -> SymbolSeries:
    for s in all_series:
        if s.symbol == symbol:
            return s
    raise DataError(f"symbol {symbol!r} not found")


def load_symbol(path, symbol: str) -> SymbolSeries:
    """Resolve ``path`` (a CSV file, an ingested directory, or a JSON archive) to one symbol."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data path not found: {path}")
    if path.is_file():
        if path.suffix.lower() == ".json":
            return find_series(load_json_archive(path), symbol)
        return load_csv(path, symbol)
    candidate = path / f"{symbol}.csv"
    if candidate.exists():
        return load_csv(candidate, symbol)
    return find_series(load_json_archive(path), symbol)
