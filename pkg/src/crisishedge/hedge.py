"""Purchasing-power loss, net real returns, and variance-reduction hedge scores.

The loss side of the ledger is additive: local residents erode by inflation
alone, foreign residents by inflation plus currency depreciation.  Net real
return is nominal minus loss, and hedge effectiveness is the Ederington-style
variance reduction of the net position against the loss exposure, clamped at
zero.  Report assembly flattens one (country, residency) pair into the row
shape used by the CSV output.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import months as mo
from .copula import CopulaFit
from .dataio import MacroSeries
from .errors import DataError, DegenerateSampleError
from .returns import ReturnSeries
from .tailsel import TailQuantileTriplet

if TYPE_CHECKING:
    from .config import CrisisEpisode

logger = logging.getLogger(__name__)


class Residency(str, Enum):
    LOCAL = "local"
    FOREIGN = "foreign"


@dataclass(frozen=True)
class LossSeries:
    """Monthly erosion of purchasing power for one residency profile.

    ``pi`` and ``fx_ret`` keep the additive components visible; for local
    residents the FX component is identically zero.
    """

    months: tuple[str, ...]
    loss: np.ndarray
    residency: Residency
    pi: np.ndarray
    fx_ret: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.months)
        for label in ("loss", "pi", "fx_ret"):
            arr = np.asarray(getattr(self, label), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{label} must have one value per month")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{label} contains non-finite values")
            object.__setattr__(self, label, arr)
        if self.residency is Residency.LOCAL and np.any(self.fx_ret != 0.0):
            raise ValueError("local residency cannot carry FX returns")
        for a, b in zip(self.months, self.months[1:]):
            if mo.month_index(b) <= mo.month_index(a):
                raise ValueError("months must be strictly increasing")

    def __len__(self) -> int:
        return len(self.months)

    def window(self, start: str | None = None, end: str | None = None) -> "LossSeries":
        keep = [
            i
            for i, m in enumerate(self.months)
            if (start is None or m >= start) and (end is None or m <= end)
        ]
        return LossSeries(
            months=tuple(self.months[i] for i in keep),
            loss=self.loss[keep],
            residency=self.residency,
            pi=self.pi[keep],
            fx_ret=self.fx_ret[keep],
        )


def loss_series(
    pi: MacroSeries,
    fx: MacroSeries | None,
    residency: Residency | str,
) -> LossSeries:
    """Assemble the additive loss per month for one residency.

    ``pi`` holds monthly inflation fractions.  For foreign residents the FX
    level series (local currency per reference unit) is differenced into
    depreciation returns, so a month needs both its own and the prior month's
    level; local residents ignore ``fx`` entirely.
    """
    residency = Residency(residency)
    if len(pi) and not pi.is_monthly:
        raise DataError(f"inflation series {pi.name!r} must be monthly")
    pi_lookup = pi.as_dict()
    if not pi_lookup:
        raise DataError("inflation series is empty")

    if residency is Residency.LOCAL:
        months = tuple(sorted(pi_lookup))
        values = np.array([pi_lookup[m] for m in months])
        return LossSeries(
            months=months, loss=values, residency=residency,
            pi=values, fx_ret=np.zeros(len(months)),
        )

    if fx is None:
        raise DataError("foreign residency needs an FX series")
    if len(fx) and not fx.is_monthly:
        raise DataError(f"FX series {fx.name!r} must be monthly")
    fx_lookup = fx.as_dict()
    for m, level in fx_lookup.items():
        if level <= 0.0:
            raise DataError(f"non-positive FX level at {m}")
    months_out: list[str] = []
    loss: list[float] = []
    pis: list[float] = []
    fx_rets: list[float] = []
    for m in sorted(pi_lookup):
        prev = mo.shift_month(m, -1)
        if m not in fx_lookup or prev not in fx_lookup:
            continue
        r_fx = fx_lookup[m] / fx_lookup[prev] - 1.0
        months_out.append(m)
        pis.append(pi_lookup[m])
        fx_rets.append(r_fx)
        loss.append(pi_lookup[m] + r_fx)
    if not months_out:
        raise DataError(
            f"no months where {pi.name!r} and consecutive {fx.name!r} levels align"
        )
    return LossSeries(
        months=tuple(months_out), loss=np.array(loss), residency=residency,
        pi=np.array(pis), fx_ret=np.array(fx_rets),
    )


def net_real_return(
    nominal: Sequence[float] | np.ndarray,
    loss: LossSeries | Sequence[float] | np.ndarray,
) -> np.ndarray:
    """Additive net position: nominal return minus same-month loss."""
    nom = np.asarray(nominal, dtype=float)
    loss_values = loss.loss if isinstance(loss, LossSeries) else np.asarray(loss, dtype=float)
    if nom.shape != loss_values.shape:
        raise DataError(
            f"length mismatch: {nom.shape[0]} returns vs {loss_values.shape[0]} losses"
        )
    return nom - loss_values


def hedge_effectiveness(
    net: Sequence[float] | np.ndarray,
    loss: Sequence[float] | np.ndarray,
) -> float:
    """Variance-reduction score max(0, 1 - Var(net)/Var(loss)), in [0, 1].

    Equals 1 exactly when the net position is constant; clamps to 0 whenever
    holding the asset is no less variable than the bare loss exposure.
    Variances are unbiased (n - 1).
    """
    net = np.asarray(net, dtype=float)
    loss = np.asarray(loss, dtype=float)
    if net.shape != loss.shape:
        raise DataError("net and loss must have equal length")
    if net.size < 2:
        raise DataError(f"need at least 2 observations, got {net.size}")
    var_loss = float(np.var(loss, ddof=1))
    if var_loss == 0.0:
        raise DegenerateSampleError(
            "loss variance is zero; hedge effectiveness undefined"
        )
    ratio = float(np.var(net, ddof=1)) / var_loss
    return max(0.0, 1.0 - ratio)


@dataclass(frozen=True)
class HedgeReport:
    """One report row: crisis outcome for a (country, residency) pair.

    Percentages are monthly means over the post-collapse window.  The tail
    dependence figure is the analytic coefficient of the selected copula fit;
    the empirical finite-threshold estimate rides along for reference.
    """

    country: str
    residency: Residency
    crisis_date: str
    hedge_effectiveness_pct: float
    mean_erosion_pct: float
    mean_net_real_pct: float
    tail_dependence: float
    tail_dependence_ci: tuple[float, float]
    quantile_triplet: TailQuantileTriplet
    tail_dependence_empirical: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.hedge_effectiveness_pct <= 100.0:
            raise ValueError("hedge effectiveness must lie in [0, 100] percent")
        lo, hi = self.tail_dependence_ci
        if not lo <= self.tail_dependence <= hi:
            raise ValueError(
                f"tail-dependence CI ({lo}, {hi}) does not bracket "
                f"the point estimate {self.tail_dependence}"
            )


def build_hedge_report(
    episode: "CrisisEpisode",
    returns: ReturnSeries,
    loss: LossSeries,
    taildep: CopulaFit,
    triplet: TailQuantileTriplet,
) -> HedgeReport:
    """Flatten one residency's post-collapse outcome into a report row.

    All inputs must already live on the identical post-collapse month grid;
    a mismatch is an alignment bug upstream, reported as such.
    """
    if returns.months != loss.months:
        raise DataError(
            "window mismatch: returns cover "
            f"{returns.months[0]}..{returns.months[-1]} but losses "
            f"{loss.months[0]}..{loss.months[-1]}"
        )
    if taildep.lambda_lower_ci is None:
        raise DataError("copula fit carries no confidence interval")
    net = net_real_return(returns.nominal, loss)
    he = hedge_effectiveness(net, loss.loss)
    return HedgeReport(
        country=episode.country,
        residency=loss.residency,
        crisis_date=episode.crisis_month,
        hedge_effectiveness_pct=100.0 * he,
        mean_erosion_pct=100.0 * float(np.mean(loss.loss)),
        mean_net_real_pct=100.0 * float(np.mean(net)),
        tail_dependence=taildep.lambda_lower,
        tail_dependence_ci=taildep.lambda_lower_ci,
        quantile_triplet=triplet,
        tail_dependence_empirical=taildep.empirical_lambda_at_tau,
    )
