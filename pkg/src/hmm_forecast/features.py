"""Observation vectors derived from daily bars.

Two representations are produced:

* fractional features ``((close-open)/open, (high-open)/open, (open-low)/open)``,
  consumed by the MAP predictor;
* successive closing-price deltas paired with the day's volume, consumed by
  the fluctuation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InsufficientDataError
from .market_data import SymbolSeries


class ObservationVector(NamedTuple):
    frac_change: float
    frac_high: float
    frac_low: float


class DeltaObservation(NamedTuple):
    close_delta: float
    volume: float


@dataclass(frozen=True)
class FeatureSet:
    """Feature rows plus their positions in the source series.

    ``index[k]`` is the bar position that produced ``values[k]``; ``dropped``
    lists bar positions whose row was non-finite and therefore removed.
    """

    values: np.ndarray
    index: np.ndarray
    dropped: tuple[int, ...] = ()

    def __len__(self):
        return len(self.values)

    def before(self, position: int, count: int | None = None) -> np.ndarray:
        """Rows produced by bars strictly before ``position``; the last ``count`` of them."""
        stop = int(np.searchsorted(self.index, position, side="left"))
        start = 0 if count is None else max(0, stop - count)
        return self.values[start:stop]


def _finite_rows(values: np.ndarray, offset: int = 0) -> FeatureSet:
    ok = np.all(np.isfinite(values), axis=1)
    positions = np.arange(len(values)) + offset
    values = values[ok]
    values.setflags(write=False)
    return FeatureSet(values=values, index=positions[ok], dropped=tuple(int(i) for i in positions[~ok]))


def fractional_matrix(series: SymbolSeries) -> np.ndarray:
    """Raw (n, 3) fractional-change matrix, non-finite rows included."""
    if not series.bars:
        return np.empty((0, 3))
    ohlc = np.array([(b.open, b.high, b.low, b.close) for b in series.bars], dtype=float)
    o, h, l, c = ohlc.T
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.column_stack(((c - o) / o, (h - o) / o, (o - l) / o))


def fractional_features(series: SymbolSeries) -> FeatureSet:
    return _finite_rows(fractional_matrix(series))


def delta_features(series: SymbolSeries) -> FeatureSet:
    """Day-over-day close differences paired with the later day's volume.

    Row ``k`` describes the move from bar ``k`` to bar ``k + 1`` and its
    ``index`` entry is ``k + 1``.
    """
    if len(series.bars) < 2:
        raise InsufficientDataError(
            f"{series.symbol}: delta features need at least 2 bars, have {len(series.bars)}"
        )
    closes = np.array([b.close for b in series.bars], dtype=float)
    volumes = np.array([b.volume for b in series.bars[1:]], dtype=float)
    return _finite_rows(np.column_stack((np.diff(closes), volumes)), offset=1)


def as_observations(features: FeatureSet) -> list[ObservationVector]:
    return [ObservationVector(*map(float, row)) for row in features.values]
