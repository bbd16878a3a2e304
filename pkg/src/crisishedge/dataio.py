"""Series ingestion, frequency conversion, reliability scoring and fusion.

Macro inputs arrive as per-series CSV files (one ``date,value`` pair per row).
This module loads them into immutable :class:`MacroSeries` containers, collapses
daily series to monthly, scores source reliability, and fuses official with
proxy series into hybrid ones.  A YAML manifest describes a whole panel.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import yaml

from . import months as mo
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


class SourceKind(str, Enum):
    OFFICIAL = "official"
    PROXY = "proxy"
    HYBRID = "hybrid"


class ConversionMethod(str, Enum):
    LAST = "last"
    MEAN = "mean"
    LINEAR_INTERP = "linear_interp"


@dataclass(frozen=True)
class MacroSeries:
    """A named scalar time series with strictly increasing stamps.

    Canonical stamps are month precision (``YYYY-MM``).  Day-stamped series are
    accepted so raw market data can be loaded, but must pass through
    :func:`to_monthly` before alignment with other series.
    """

    name: str
    observations: tuple[tuple[str, float], ...]
    unit: str = ""
    source_kind: SourceKind = SourceKind.OFFICIAL
    reliability: float | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("series name must be non-empty")
        cleaned = []
        monthly_flags = set()
        for stamp, value in self.observations:
            stamp = mo.parse_stamp(stamp)
            value = float(value)
            if not np.isfinite(value):
                raise ValueError(f"non-finite value at {stamp} in series {self.name!r}")
            monthly_flags.add(mo.is_month(stamp))
            cleaned.append((stamp, value))
        if len(monthly_flags) > 1:
            raise ValueError(f"series {self.name!r} mixes month and day stamps")
        for a, b in zip(cleaned, cleaned[1:]):
            if a[0] >= b[0]:
                raise ValueError(
                    f"stamps not strictly increasing in series {self.name!r}: "
                    f"{a[0]} then {b[0]}"
                )
        if self.reliability is not None and not 0.0 <= self.reliability <= 1.0:
            raise ValueError(f"reliability must lie in [0, 1], got {self.reliability}")
        object.__setattr__(self, "observations", tuple(cleaned))
        object.__setattr__(self, "source_kind", SourceKind(self.source_kind))

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def is_monthly(self) -> bool:
        return all(mo.is_month(s) for s, _ in self.observations)

    @property
    def stamps(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.observations)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.observations], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return dict(self.observations)

    def value_at(self, stamp: str) -> float:
        try:
            return self.as_dict()[stamp]
        except KeyError:
            raise KeyError(f"series {self.name!r} has no observation at {stamp}") from None

    def window(self, start: str | None = None, end: str | None = None) -> "MacroSeries":
        """Restrict to stamps within ``[start, end]`` (inclusive, either side optional)."""
        kept = tuple(
            (s, v)
            for s, v in self.observations
            if (start is None or s >= start) and (end is None or s <= end)
        )
        return replace(self, observations=kept)


def load_series(
    path: str | Path,
    *,
    date_column: str = "date",
    value_column: str = "value",
    name: str | None = None,
    unit: str = "",
    source_kind: SourceKind | str = SourceKind.OFFICIAL,
    reliability: float | None = None,
) -> MacroSeries:
    """Load one series from a CSV file.

    Rows may arrive in any order; they are sorted by stamp.  A duplicate stamp
    is a hard error naming the offending stamp, never a silent overwrite.
    Missing months are simply absent rows; empty value cells are rejected so
    sentinel encodings cannot sneak through.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"series file not found: {path}")
    rows: list[tuple[str, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (date_column, value_column):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r} (header was {header})")
        for lineno, row in enumerate(reader, start=2):
            raw_date = (row.get(date_column) or "").strip()
            raw_value = (row.get(value_column) or "").strip()
            if not raw_date and not raw_value:
                continue
            if not raw_date or not raw_value:
                raise DataError(f"{path}: malformed row {lineno}: {row}")
            try:
                stamp = mo.parse_stamp(raw_date)
                value = float(raw_value)
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from exc
            if not np.isfinite(value):
                raise DataError(f"{path}: row {lineno}: non-finite value {raw_value!r}")
            rows.append((stamp, value))
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0]:
            raise DataError(f"{path}: duplicate stamp {a[0]!r}")
    try:
        return MacroSeries(
            name=name or path.stem,
            observations=tuple(rows),
            unit=unit,
            source_kind=SourceKind(source_kind),
            reliability=reliability,
        )
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_series(
    series: MacroSeries,
    path: str | Path,
    *,
    date_column: str = "date",
    value_column: str = "value",
) -> Path:
    """Write a series back to CSV; values use shortest round-trip formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([date_column, value_column])
        for stamp, value in series.observations:
            writer.writerow([stamp, repr(value)])
    return path


def _interp_monthly(collapsed: list[tuple[str, float]], name: str) -> list[tuple[str, float]]:
    idx = np.array([mo.month_index(s) for s, _ in collapsed], dtype=float)
    vals = np.array([v for _, v in collapsed], dtype=float)
    full = np.arange(idx[0], idx[-1] + 1)
    filled = np.interp(full, idx, vals)
    return [(mo.index_to_month(int(i)), float(v)) for i, v in zip(full, filled)]


def to_monthly(
    series: MacroSeries,
    method: ConversionMethod | str,
    *,
    start: str | None = None,
    end: str | None = None,
) -> MacroSeries:
    """Collapse a series to one observation per month.

    ``last`` and ``mean`` aggregate within each observed month and leave gaps
    alone.  ``linear_interp`` first collapses to last-in-month, then fills
    interior monthly gaps by linear interpolation on the month index; it never
    extrapolates, so a ``start``/``end`` outside the observed span is an error.
    Passing an already-monthly series through ``last`` or ``mean`` is the
    identity on the selected window.
    """
    method = ConversionMethod(method)
    if len(series) == 0:
        raise DataError(f"cannot convert empty series {series.name!r}")
    if start is not None:
        start = mo.month_of(start)
    if end is not None:
        end = mo.month_of(end)

    by_month: dict[str, list[float]] = {}
    order: list[str] = []
    for stamp, value in series.observations:
        month = stamp[:7]
        if month not in by_month:
            by_month[month] = []
            order.append(month)
        by_month[month].append(value)

    if method is ConversionMethod.MEAN:
        collapsed = [(m, float(np.mean(by_month[m]))) for m in order]
    else:
        collapsed = [(m, by_month[m][-1]) for m in order]

    if method is ConversionMethod.LINEAR_INTERP:
        if start is not None and start < collapsed[0][0]:
            raise DataError(
                f"series {series.name!r}: cannot interpolate before first "
                f"observation {collapsed[0][0]}"
            )
        if end is not None and end > collapsed[-1][0]:
            raise DataError(
                f"series {series.name!r}: cannot interpolate past last "
                f"observation {collapsed[-1][0]}"
            )
        collapsed = _interp_monthly(collapsed, series.name)

    kept = tuple(
        (m, v)
        for m, v in collapsed
        if (start is None or m >= start) and (end is None or m <= end)
    )
    return replace(series, observations=kept)


@dataclass(frozen=True)
class ReliabilityInputs:
    """Normalized source-quality components, each already scaled to [0, 1].

    ``timeliness`` is high when publication lags are short; the other two are
    penalties (high is bad): ``revision_volatility`` measures how much past
    values get restated, ``crosscheck_error`` the discrepancy against an
    independent measurement of the same quantity.
    """

    timeliness: float
    revision_volatility: float
    crosscheck_error: float

    def __post_init__(self) -> None:
        for label in ("timeliness", "revision_volatility", "crosscheck_error"):
            v = getattr(self, label)
            if not (np.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{label} must lie in [0, 1], got {v}")


def reliability_score(inputs: ReliabilityInputs) -> float:
    """Convex data-quality weight in [0, 1]; 1 means fully trustworthy.

    Timeliness carries weight 0.4, the two penalty components 0.3 each.
    """
    return (
        0.4 * inputs.timeliness
        + 0.3 * (1.0 - inputs.revision_volatility)
        + 0.3 * (1.0 - inputs.crosscheck_error)
    )


def fuse_hybrid(
    actual: MacroSeries,
    proxy: MacroSeries,
    q: float,
    *,
    name: str | None = None,
) -> MacroSeries:
    """Blend an official series with a proxy, month by month.

    Months present in both get the convex combination ``q * actual +
    (1 - q) * proxy``.  Months present in only one source pass through
    unchanged; those months are logged so the provenance of every point in the
    hybrid stays auditable.
    """
    if not (np.isfinite(q) and 0.0 <= q <= 1.0):
        raise ValueError(f"fusion weight q must lie in [0, 1], got {q}")
    for s in (actual, proxy):
        if len(s) and not s.is_monthly:
            raise DataError(f"fuse_hybrid needs monthly series; {s.name!r} is day-stamped")
    a, p = actual.as_dict(), proxy.as_dict()
    all_months = sorted(set(a) | set(p))
    if not all_months:
        raise DataError("cannot fuse two empty series")
    fused: list[tuple[str, float]] = []
    only_actual, only_proxy = [], []
    for m in all_months:
        if m in a and m in p:
            fused.append((m, q * a[m] + (1.0 - q) * p[m]))
        elif m in a:
            fused.append((m, a[m]))
            only_actual.append(m)
        else:
            fused.append((m, p[m]))
            only_proxy.append(m)
    if only_actual:
        logger.info(
            "fuse %s: %d month(s) from official only: %s",
            actual.name, len(only_actual), ", ".join(only_actual),
        )
    if only_proxy:
        logger.info(
            "fuse %s: %d month(s) from proxy only: %s",
            actual.name, len(only_proxy), ", ".join(only_proxy),
        )
    if actual.unit and proxy.unit and actual.unit != proxy.unit:
        logger.warning(
            "fusing series with different units: %r vs %r", actual.unit, proxy.unit
        )
    return MacroSeries(
        name=name or actual.name,
        observations=tuple(fused),
        unit=actual.unit or proxy.unit,
        source_kind=SourceKind.HYBRID,
        reliability=q,
    )


def pct_change(series: MacroSeries, *, name: str | None = None) -> MacroSeries:
    """Month-over-month fractional change of a positive monthly level series.

    Output at month ``t`` exists only when month ``t-1`` is also observed, so
    gaps in the input become gaps in the output rather than multi-month jumps.
    """
    if not series.is_monthly:
        raise DataError(f"pct_change needs a monthly series; {series.name!r} is not")
    if np.any(series.values <= 0.0):
        raise DataError(f"pct_change needs strictly positive levels in {series.name!r}")
    values = series.as_dict()
    out: list[tuple[str, float]] = []
    for m, v in series.observations:
        prev = values.get(mo.shift_month(m, -1))
        if prev is not None:
            out.append((m, v / prev - 1.0))
    return replace(
        series,
        name=name or f"{series.name}_pct",
        observations=tuple(out),
        unit="fraction/month",
    )


# --- panel manifest -----------------------------------------------------------

ROLE_NAMES = ("equity", "fx", "inflation")
INFLATION_KINDS = ("rate", "index")


@dataclass(frozen=True)
class SeriesSpec:
    name: str
    path: Path
    unit: str = ""
    source_kind: SourceKind = SourceKind.OFFICIAL
    date_column: str = "date"
    value_column: str = "value"
    to_monthly: ConversionMethod | None = None


@dataclass(frozen=True)
class FusionSpec:
    name: str
    actual: str
    proxy: str
    q: float


@dataclass(frozen=True)
class PanelManifest:
    """Declarative description of a country panel.

    ``roles`` binds the three pipeline roles (equity index level, FX rate
    level, inflation) to series names; ``inflation_kind`` says whether the
    inflation series is already a monthly rate or a price index that needs
    differencing.
    """

    series: tuple[SeriesSpec, ...]
    fusions: tuple[FusionSpec, ...]
    roles: Mapping[str, str]
    inflation_kind: str
    base_dir: Path

    def __post_init__(self) -> None:
        known = {s.name for s in self.series} | {f.name for f in self.fusions}
        if len(known) != len(self.series) + len(self.fusions):
            raise ConfigError("duplicate series names in manifest")
        for role in ROLE_NAMES:
            if role not in self.roles:
                raise ConfigError(f"manifest roles must bind {role!r}")
            if self.roles[role] not in known:
                raise ConfigError(
                    f"role {role!r} refers to unknown series {self.roles[role]!r}"
                )
        for f in self.fusions:
            for ref in (f.actual, f.proxy):
                if ref not in {s.name for s in self.series}:
                    raise ConfigError(f"fusion {f.name!r} refers to unknown series {ref!r}")
        if self.inflation_kind not in INFLATION_KINDS:
            raise ConfigError(
                f"inflation_kind must be one of {INFLATION_KINDS}, got {self.inflation_kind!r}"
            )


def _require(mapping: Mapping, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _resolve_q(block: Mapping, context: str) -> float:
    if "q" in block and "reliability" in block:
        raise ConfigError(f"{context}: give either q or reliability components, not both")
    if "q" in block:
        q = float(block["q"])
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"{context}: q must lie in [0, 1], got {q}")
        return q
    if "reliability" in block:
        comp = block["reliability"]
        try:
            inputs = ReliabilityInputs(
                timeliness=float(_require(comp, "timeliness", context)),
                revision_volatility=float(_require(comp, "revision_volatility", context)),
                crosscheck_error=float(_require(comp, "crosscheck_error", context)),
            )
        except ValueError as exc:
            raise ConfigError(f"{context}: {exc}") from exc
        return reliability_score(inputs)
    raise ConfigError(f"{context}: needs q or reliability components")


def load_manifest(path: str | Path) -> PanelManifest:
    """Parse and validate a YAML panel manifest."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: manifest must be a mapping")
    if doc.get("schema_version") != 1:
        raise ConfigError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")

    series = []
    for i, block in enumerate(doc.get("series") or []):
        ctx = f"{path}: series[{i}]"
        if not isinstance(block, dict):
            raise ConfigError(f"{ctx}: must be a mapping")
        conv = block.get("to_monthly")
        try:
            conv = ConversionMethod(conv) if conv is not None else None
            kind = SourceKind(block.get("source_kind", "official"))
        except ValueError as exc:
            raise ConfigError(f"{ctx}: {exc}") from exc
        series.append(
            SeriesSpec(
                name=str(_require(block, "name", ctx)),
                path=Path(str(_require(block, "path", ctx))),
                unit=str(block.get("unit", "")),
                source_kind=kind,
                date_column=str(block.get("date_column", "date")),
                value_column=str(block.get("value_column", "value")),
                to_monthly=conv,
            )
        )

    fusions = []
    for i, block in enumerate(doc.get("fusions") or []):
        ctx = f"{path}: fusions[{i}]"
        if not isinstance(block, dict):
            raise ConfigError(f"{ctx}: must be a mapping")
        fusions.append(
            FusionSpec(
                name=str(_require(block, "name", ctx)),
                actual=str(_require(block, "actual", ctx)),
                proxy=str(_require(block, "proxy", ctx)),
                q=_resolve_q(block, ctx),
            )
        )

    roles_block = _require(doc, "roles", str(path))
    if not isinstance(roles_block, dict):
        raise ConfigError(f"{path}: roles must be a mapping")
    roles = {k: str(v) for k, v in roles_block.items() if k in ROLE_NAMES}

    return PanelManifest(
        series=tuple(series),
        fusions=tuple(fusions),
        roles=roles,
        inflation_kind=str(doc.get("inflation_kind", "rate")),
        base_dir=path.parent,
    )


def load_panel(manifest: PanelManifest) -> dict[str, MacroSeries]:
    """Materialize every series a manifest declares, fusions included.

    File paths resolve relative to the manifest's directory.  Series with a
    ``to_monthly`` method are converted on load, so the returned panel is
    consistently month-stamped.
    """
    panel: dict[str, MacroSeries] = {}
    for spec in manifest.series:
        p = spec.path if spec.path.is_absolute() else manifest.base_dir / spec.path
        s = load_series(
            p,
            date_column=spec.date_column,
            value_column=spec.value_column,
            name=spec.name,
            unit=spec.unit,
            source_kind=spec.source_kind,
        )
        if spec.to_monthly is not None:
            s = to_monthly(s, spec.to_monthly)
        if len(s) and not s.is_monthly:
            raise DataError(
                f"series {spec.name!r} is day-stamped; declare a to_monthly method"
            )
        panel[spec.name] = s
    for f in manifest.fusions:
        panel[f.name] = fuse_hybrid(panel[f.actual], panel[f.proxy], f.q, name=f.name)
    return panel
