"""Nominal and real return construction for local and foreign residents.

Real returns are multiplicative (Fisher) deflations, never the additive
shortcut: a local resident deflates the nominal equity return by local
inflation, a foreign (reference-currency) resident additionally converts
through the FX rate, quoted as local currency per unit of reference currency.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import months as mo
from .dataio import MacroSeries
from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriceObservation:
    """One month's raw market state: equity index level and FX level.

    ``fx_rate`` is local currency per unit of reference currency, so a rising
    value is a depreciation of the local currency.  ``inflation_rate`` (a
    monthly fraction) may ride along here or be supplied separately when the
    return series is built.
    """

    month: str
    index_level: float
    fx_rate: float
    inflation_rate: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "month", mo.month_of(self.month))
        if not (np.isfinite(self.index_level) and self.index_level > 0.0):
            raise ValueError(f"index level must be positive at {self.month}")
        if not (np.isfinite(self.fx_rate) and self.fx_rate > 0.0):
            raise ValueError(f"FX rate must be positive at {self.month}")
        if self.inflation_rate is not None:
            pi = float(self.inflation_rate)
            if not (np.isfinite(pi) and 1.0 + pi > 0.0):
                raise ValueError(f"inflation rate at {self.month} must exceed -1")


@dataclass(frozen=True)
class ReturnSeries:
    """Aligned monthly nominal and real returns for both residencies."""

    months: tuple[str, ...]
    nominal: np.ndarray
    real_domestic: np.ndarray
    real_foreign: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.months)
        for label in ("nominal", "real_domestic", "real_foreign"):
            arr = np.asarray(getattr(self, label), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{label} must have one value per month")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{label} contains non-finite returns")
            if np.any(arr <= -1.0):
                raise ValueError(f"{label} contains returns at or below -100%")
            object.__setattr__(self, label, arr)
        for a, b in zip(self.months, self.months[1:]):
            if mo.month_index(b) <= mo.month_index(a):
                raise ValueError("months must be strictly increasing")

    def __len__(self) -> int:
        return len(self.months)

    def window(self, start: str | None = None, end: str | None = None) -> "ReturnSeries":
        keep = [
            i
            for i, m in enumerate(self.months)
            if (start is None or m >= start) and (end is None or m <= end)
        ]
        return ReturnSeries(
            months=tuple(self.months[i] for i in keep),
            nominal=self.nominal[keep],
            real_domestic=self.real_domestic[keep],
            real_foreign=self.real_foreign[keep],
        )


def nominal_return(index_t: float, index_prev: float) -> float:
    """Simple one-period return of a positive price level."""
    if not (index_t > 0.0 and index_prev > 0.0):
        raise ValueError("price levels must be positive")
    return index_t / index_prev - 1.0


def real_return_domestic(nominal: float, inflation: float) -> float:
    """Deflate a nominal return by same-period inflation, both fractions."""
    if not 1.0 + inflation > 0.0:
        raise ValueError("inflation must exceed -1")
    return (1.0 + nominal) / (1.0 + inflation) - 1.0


def real_return_foreign(
    nominal: float, fx_prev: float, fx_t: float, inflation: float
) -> float:
    """Real return for a reference-currency resident.

    The position converts through the FX rate (local per reference unit), so
    the gross nominal return is scaled by ``fx_prev / fx_t`` before deflating.
    The FX factor is formed first; with an unchanged rate it is exactly 1.0 and
    the result coincides bit for bit with the domestic real return.
    """
    if not (fx_prev > 0.0 and fx_t > 0.0):
        raise ValueError("FX rates must be positive")
    if not 1.0 + inflation > 0.0:
        raise ValueError("inflation must exceed -1")
    fx_factor = fx_prev / fx_t
    return (1.0 + nominal) * fx_factor / (1.0 + inflation) - 1.0


def price_observations(
    equity: MacroSeries, fx: MacroSeries
) -> tuple[PriceObservation, ...]:
    """Pair monthly equity-index and FX levels on their common months."""
    for s in (equity, fx):
        if len(s) and not s.is_monthly:
            raise DataError(f"series {s.name!r} must be monthly")
    e, f = equity.as_dict(), fx.as_dict()
    common = sorted(set(e) & set(f))
    if not common:
        raise DataError(
            f"no overlapping months between {equity.name!r} and {fx.name!r}"
        )
    try:
        return tuple(
            PriceObservation(month=m, index_level=e[m], fx_rate=f[m]) for m in common
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def build_return_series(
    prices: Sequence[PriceObservation],
    inflation: MacroSeries | None = None,
) -> ReturnSeries:
    """Turn monthly price observations into aligned return triples.

    A return for month ``t`` needs levels at both ``t`` and ``t-1``; months
    following a gap are skipped with a warning.  Inflation comes from the
    ``inflation`` series when given (it wins over any rate embedded in the
    observations); months with no inflation at all are dropped with a warning.
    """
    if len(prices) < 2:
        raise DataError("need at least 2 price observations to form returns")
    obs = sorted(prices, key=lambda o: o.month)
    for a, b in zip(obs, obs[1:]):
        if a.month == b.month:
            raise DataError(f"duplicate price observation for {a.month}")
    pi_lookup: dict[str, float] = {}
    if inflation is not None:
        if len(inflation) and not inflation.is_monthly:
            raise DataError(f"inflation series {inflation.name!r} must be monthly")
        pi_lookup = inflation.as_dict()

    months: list[str] = []
    nominal: list[float] = []
    real_dom: list[float] = []
    real_for: list[float] = []
    for prev, cur in zip(obs, obs[1:]):
        if mo.month_index(cur.month) != mo.month_index(prev.month) + 1:
            logger.warning(
                "gap before %s (previous observation %s); skipping return",
                cur.month, prev.month,
            )
            continue
        pi = pi_lookup.get(cur.month, cur.inflation_rate)
        if pi is None:
            logger.warning("no inflation for %s; dropping month", cur.month)
            continue
        if not 1.0 + pi > 0.0:
            raise DataError(f"inflation at {cur.month} must exceed -1, got {pi}")
        r = nominal_return(cur.index_level, prev.index_level)
        months.append(cur.month)
        nominal.append(r)
        real_dom.append(real_return_domestic(r, pi))
        real_for.append(real_return_foreign(r, prev.fx_rate, cur.fx_rate, pi))
    if not months:
        raise DataError("no months with complete price and inflation data")
    return ReturnSeries(
        months=tuple(months),
        nominal=np.array(nominal),
        real_domestic=np.array(real_dom),
        real_foreign=np.array(real_for),
    )
