"""End-to-end orchestration of a crisis episode run.

Stage order: ingest panel, build returns, select tail quantiles, fit the
quantile regressions, fit copulas and bootstrap tail-dependence intervals,
assemble hedge reports, and only then compute attribution.  Hedge outputs are
flushed to disk before attribution starts, so a late-stage failure can never
corrupt the already-written report files; every file is written atomically.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from . import attribution as attr
from . import copula as cop
from . import dataio
from . import hedge
from . import months as mo
from . import qreg
from . import returns as ret
from . import tailsel
from .config import CrisisEpisode, config_hash
from .errors import CrisisHedgeError, DataError, DegenerateSampleError
from .hedge import HedgeReport, LossSeries, Residency
from .quantiles import CEIL_FUZZ
from .tailsel import MIN_TAIL_COUNT

logger = logging.getLogger(__name__)

ENV_OUT_DIR = "CRISISHEDGE_OUTDIR"
FAST_REPLICATIONS = 200

REPORT_COLUMNS = (
    "Country",
    "Residents",
    "Crisis Date",
    "Hedge Eff. (%)",
    "Erosion (%)",
    "Net Real (%)",
    "Tail Dependence",
)


@dataclass
class RunResult:
    """Everything a run produced, in memory, plus where it was written."""

    episode: CrisisEpisode
    triplet: tailsel.TailQuantileTriplet
    return_series: ret.ReturnSeries
    post_window: ret.ReturnSeries
    losses: dict[Residency, LossSeries]
    pseudo_samples: dict[Residency, cop.PseudoSample]
    models: dict[float, qreg.QuantileModel]
    pseudo_r2_in_sample: dict[float, float]
    cv: dict[float, qreg.CVReport]
    copula_candidates: dict[Residency, tuple[cop.CopulaFit, ...]]
    copula_fits: dict[Residency, cop.CopulaFit]
    reports: list[HedgeReport]
    attributions: attr.ImportanceSummary | None
    attribution_rows: list[attr.AttributionResult]
    diagnostics: list[str]
    provenance: dict[str, object]
    out_dir: Path | None


@contextmanager
def _stage(name: str):
    try:
        yield
    except CrisisHedgeError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def resolve_out_dir(episode: CrisisEpisode, out_dir: str | Path | None) -> Path:
    """Precedence: explicit argument, then environment, then config, then cwd."""
    if out_dir is not None:
        return Path(out_dir)
    env = os.environ.get(ENV_OUT_DIR)
    if env:
        return Path(env)
    if episode.output_dir is not None:
        return episode.output_dir
    return Path("crisishedge_out")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(value: float, decimals: int) -> str:
    s = f"{value:.{decimals}f}"
    if float(s) == 0.0:
        s = f"{0.0:.{decimals}f}"
    return s


def _provenance_line(prov: Mapping[str, object]) -> str:
    return (
        f"# crisishedge {prov['version']} config={prov['config_sha256']} "
        f"seed={prov['seed']} replications={prov['replications']}"
    )


def render_report_csv(
    episode: CrisisEpisode, reports: Sequence[HedgeReport], prov: Mapping[str, object]
) -> str:
    """Flat CSV mirroring the crisis-report table column order bit-exactly."""
    lines = [_provenance_line(prov), ",".join(REPORT_COLUMNS)]
    ordered = sorted(reports, key=lambda r: (r.country, r.residency.value))
    for r in ordered:
        lines.append(
            ",".join(
                [
                    r.country,
                    r.residency.value.capitalize(),
                    episode.crisis_date,
                    _fmt(r.hedge_effectiveness_pct, 1),
                    _fmt(r.mean_erosion_pct, 2),
                    _fmt(r.mean_net_real_pct, 2),
                    _fmt(r.tail_dependence, 2),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _write_coefficients(path: Path, result: "RunResult", prov: Mapping[str, object]) -> None:
    lines = [_provenance_line(prov), "tau,column,coefficient"]
    for tau in sorted(result.models):
        model = result.models[tau]
        lines.append(f"{tau!r},{qreg.INTERCEPT_LABEL},{model.intercept!r}")
        for col in model.columns:
            lines.append(f"{tau!r},{col},{model.betas[col]!r}")
        for (a, b), g in model.gammas.items():
            lines.append(f"{tau!r},{a}*{b},{g!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_attribution(path: Path, rows: Sequence[attr.AttributionResult],
                       prov: Mapping[str, object]) -> None:
    lines = [_provenance_line(prov), "month,column,phi"]
    for row in rows:
        lines.append(f"{row.instance_month},(baseline),{row.phi0!r}")
        for col, phi in row.phi.items():
            lines.append(f"{row.instance_month},{col},{phi!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_figures(out: Path, result: "RunResult", prov: Mapping[str, object]) -> None:
    rs = result.return_series
    lines = [_provenance_line(result.provenance), "month,measure,value"]
    for i, month in enumerate(rs.months):
        lines.append(f"{month},nominal,{rs.nominal[i]!r}")
        lines.append(f"{month},real_domestic,{rs.real_domestic[i]!r}")
        lines.append(f"{month},real_foreign,{rs.real_foreign[i]!r}")
    _atomic_write(out / "real_returns.csv", "\n".join(lines) + "\n")

    lines = [_provenance_line(prov), "label,mean_pct,std_pct"]
    post = result.post_window

    def stat_row(label: str, values: np.ndarray) -> str:
        return (
            f"{label},{100.0 * float(np.mean(values))!r},"
            f"{100.0 * float(np.std(values, ddof=1))!r}"
        )

    lines.append(stat_row("nominal", post.nominal))
    lines.append(stat_row("real_domestic", post.real_domestic))
    lines.append(stat_row("real_foreign", post.real_foreign))
    for residency in sorted(result.losses, key=lambda r: r.value):
        loss = result.losses[residency]
        lines.append(stat_row(f"loss_{residency.value}", loss.loss))
        lines.append(
            stat_row(f"net_{residency.value}", post.nominal - loss.loss)
        )
    _atomic_write(out / "risk_return.csv", "\n".join(lines) + "\n")

    if result.attributions is not None:
        lines = [_provenance_line(prov), "column,share_pct"]
        for col in result.attributions.ranking:
            lines.append(f"{col},{result.attributions.shares[col]!r}")
        _atomic_write(out / "importance_bars.csv", "\n".join(lines) + "\n")


def _copula_fit_dict(fit: cop.CopulaFit) -> dict[str, object]:
    return {
        "family": fit.family.value,
        "theta": fit.theta,
        "log_likelihood": fit.log_likelihood,
        "aic": fit.aic,
        "bic": fit.bic,
        "lambda_lower": fit.lambda_lower,
        "lambda_lower_ci": list(fit.lambda_lower_ci) if fit.lambda_lower_ci else None,
        "empirical_lambda_at_tau": fit.empirical_lambda_at_tau,
        "n": fit.n,
        "converged": fit.converged,
        "boundary": fit.boundary,
        "diagnostics": list(fit.diagnostics),
    }


def _write_full_report(path: Path, result: "RunResult") -> None:
    episode = result.episode
    triplet = result.triplet
    doc = {
        "schema_version": 1,
        "provenance": result.provenance,
        "episode": {
            "country": episode.country,
            "crisis_date": episode.crisis_date,
            "crisis_month": episode.crisis_month,
            "window": [episode.window_start, episode.window_end],
            "residency": [r.value for r in episode.residency],
            "criterion": episode.criterion,
            "quantile_override": list(episode.quantile_override or ()) or None,
        },
        "quantile_triplet": {
            "tau_low": triplet.tau_low,
            "tau_mid": triplet.tau_mid,
            "tau_high": triplet.tau_high,
            "per_country": dict(triplet.per_country_taus),
            "variance_ratio": {
                k: (None if np.isnan(v) else v)
                for k, v in triplet.variance_ratio.items()
            },
            "variance_pass": dict(triplet.variance_pass),
            "warnings": list(triplet.warnings),
        },
        "reports": [
            {
                "country": r.country,
                "residency": r.residency.value,
                "crisis_month": r.crisis_date,
                "hedge_effectiveness_pct": r.hedge_effectiveness_pct,
                "mean_erosion_pct": r.mean_erosion_pct,
                "mean_net_real_pct": r.mean_net_real_pct,
                "tail_dependence": r.tail_dependence,
                "tail_dependence_ci": list(r.tail_dependence_ci),
                "tail_dependence_empirical": r.tail_dependence_empirical,
            }
            for r in sorted(result.reports, key=lambda r: (r.country, r.residency.value))
        ],
        "copula": {
            residency.value: {
                "selected": _copula_fit_dict(result.copula_fits[residency]),
                "candidates": [
                    _copula_fit_dict(f) for f in result.copula_candidates[residency]
                ],
            }
            for residency in sorted(result.copula_fits, key=lambda r: r.value)
        },
        "quantile_models": {
            repr(tau): {
                "intercept": m.intercept,
                "betas": dict(m.betas),
                "gammas": {f"{a}*{b}": g for (a, b), g in m.gammas.items()},
                "objective_value": m.objective_value,
                "pseudo_r2_in_sample": result.pseudo_r2_in_sample.get(tau),
            }
            for tau, m in sorted(result.models.items())
        },
        "cv": {
            repr(tau): {
                "pooled_mae": report.pooled_mae,
                "pooled_pseudo_r2": report.pooled_pseudo_r2,
                "coefficient_paths": {
                    col: list(path)
                    for col, path in report.coefficient_paths.items()
                },
                "folds": [
                    {
                        "fold": f.fold,
                        "train_rows": f.train_rows,
                        "test_months": list(f.test_months),
                        "n_test": f.n_test,
                        "mae": f.mae,
                        "pseudo_r2": (None if np.isnan(f.pseudo_r2) else f.pseudo_r2),
                    }
                    for f in report.folds
                ],
            }
            for tau, report in sorted(result.cv.items())
        },
        "attribution": (
            None
            if result.attributions is None
            else {
                "ranking": list(result.attributions.ranking),
                "shares_pct": dict(result.attributions.shares),
                "stability_kendall_tau": result.attributions.stability_kendall_tau,
            }
        ),
        "diagnostics": result.diagnostics,
    }
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")


def run_pipeline(
    episode: CrisisEpisode,
    *,
    fast: bool = False,
    out_dir: str | Path | None = None,
    write_outputs: bool = True,
    with_cv: bool = True,
    with_attribution: bool = True,
) -> RunResult:
    """Execute the full analysis for one crisis episode.

    ``fast`` caps bootstrap replications at 200 for desk-scale runs; the
    report CSV is unaffected because its headline numbers never depend on the
    bootstrap.  ``with_cv``/``with_attribution`` let the sensitivity sweep
    skip stages whose outputs it does not compare.
    """
    diagnostics: list[str] = []
    replications = (
        min(FAST_REPLICATIONS, episode.bootstrap.replications)
        if fast
        else episode.bootstrap.replications
    )
    prov: dict[str, object] = {
        "version": __version__,
        "config_sha256": config_hash(episode),
        "seed": episode.bootstrap.seed,
        "replications": replications,
        "fast": fast,
    }

    with _stage("dataio"):
        manifest = dataio.load_manifest(episode.series_manifest)
        panel = dataio.load_panel(manifest)
        inflation = panel[manifest.roles["inflation"]]
        if manifest.inflation_kind == "index":
            inflation = dataio.pct_change(inflation, name=f"{inflation.name}_rate")

    with _stage("returns"):
        lead = mo.shift_month(episode.window_start, -1)
        obs = ret.price_observations(
            panel[manifest.roles["equity"]].window(lead, episode.window_end),
            panel[manifest.roles["fx"]].window(lead, episode.window_end),
        )
        full_series = ret.build_return_series(obs, inflation)
        window_series = full_series.window(episode.window_start, episode.window_end)
        if len(window_series) < 2:
            raise DataError("fewer than 2 return months inside the analysis window")

    with _stage("tailsel"):
        post = window_series.window(episode.crisis_month, None)
        if len(post) < MIN_TAIL_COUNT:
            raise DataError(
                f"post-collapse window holds {len(post)} return month(s); "
                f"need at least {MIN_TAIL_COUNT}"
            )
        triplet = tailsel.build_triplet(
            {episode.country: post.nominal},
            tau_override=episode.active_override,
        )
        diagnostics.extend(triplet.warnings)
    tau_levels = (triplet.tau_low, triplet.tau_mid, triplet.tau_high)

    with _stage("qreg"):
        target = dataio.MacroSeries(
            name=qreg.TARGET_COLUMN,
            observations=tuple(zip(window_series.months, window_series.nominal)),
            unit="fraction/month",
        )
        qpanel = dict(panel)
        qpanel[qreg.TARGET_COLUMN] = target
        design = qreg.engineer_features(
            qpanel,
            episode.feature_schema,
            window=(episode.window_start, episode.window_end),
        )
        if design.dropped_rows:
            diagnostics.append(
                f"qreg: dropped {design.dropped_rows} row(s) with feature gaps"
            )
        models: dict[float, qreg.QuantileModel] = {}
        r2: dict[float, float] = {}
        cv_reports: dict[float, qreg.CVReport] = {}
        for tau in tau_levels:
            model = qreg.fit_quantile(design, tau)
            models[tau] = model
            r2[tau] = qreg.pseudo_r2(model, design)
            if with_cv and episode.cv is not None:
                try:
                    cv_reports[tau] = qreg.expanding_window_cv(
                        design,
                        tau,
                        episode.cv.initial_window,
                        episode.cv.step,
                        force_test_month=episode.cv.force_test_month,
                    )
                except (DataError, DegenerateSampleError) as exc:
                    diagnostics.append(f"cv (tau={tau:.4g}): {exc}")

    seeds = np.random.SeedSequence(episode.bootstrap.seed).generate_state(4)
    residency_seed = {Residency.LOCAL: int(seeds[0]), Residency.FOREIGN: int(seeds[1])}
    losses: dict[Residency, LossSeries] = {}
    samples: dict[Residency, cop.PseudoSample] = {}
    candidates: dict[Residency, tuple[cop.CopulaFit, ...]] = {}
    selected: dict[Residency, cop.CopulaFit] = {}
    reports: list[HedgeReport] = []
    for residency in sorted(episode.residency, key=lambda r: r.value):
        with _stage(f"hedge ({residency.value})"):
            loss_full = hedge.loss_series(
                inflation, panel[manifest.roles["fx"]], residency
            )
            common = sorted(set(post.months) & set(loss_full.months))
            if len(common) < len(post.months):
                diagnostics.append(
                    f"hedge ({residency.value}): {len(post.months) - len(common)} "
                    "post-collapse month(s) lack loss data"
                )
            if len(common) < MIN_TAIL_COUNT:
                raise DataError(
                    "too few aligned post-collapse months for "
                    f"{residency.value}: {len(common)}"
                )
            post_aligned = post.window(common[0], common[-1])
            loss = loss_full.window(common[0], common[-1])
            losses[residency] = loss

        with _stage(f"copula ({residency.value})"):
            sample = cop.PseudoSample.from_data(post_aligned.nominal, loss.loss)
            samples[residency] = sample
            fits = cop.fit_families(sample, tau=triplet.tau_low)
            candidates[residency] = fits
            for fit in fits:
                diagnostics.extend(
                    f"copula ({residency.value}): {d}" for d in fit.diagnostics
                )
            chosen = cop.select_family(fits, episode.criterion)
            ci = cop.block_bootstrap_ci(
                sample,
                cop.family_lambda_statistic(chosen.family),
                replications=replications,
                block_length=episode.bootstrap.block_length,
                seed=residency_seed[residency],
            )
            chosen = cop.attach_ci(chosen, ci)
            selected[residency] = chosen

        with _stage(f"hedge ({residency.value})"):
            try:
                reports.append(
                    hedge.build_hedge_report(
                        episode, post_aligned, loss, chosen, triplet
                    )
                )
            except DegenerateSampleError as exc:
                diagnostics.append(f"hedge ({residency.value}): {exc}")

    result = RunResult(
        episode=episode,
        triplet=triplet,
        return_series=window_series,
        post_window=post,
        losses=losses,
        pseudo_samples=samples,
        models=models,
        pseudo_r2_in_sample=r2,
        cv=cv_reports,
        copula_candidates=candidates,
        copula_fits=selected,
        reports=reports,
        attributions=None,
        attribution_rows=[],
        diagnostics=diagnostics,
        provenance=prov,
        out_dir=None,
    )

    destination: Path | None = None
    if write_outputs:
        destination = resolve_out_dir(episode, out_dir)
        result.out_dir = destination
        _atomic_write(
            destination / "report.csv", render_report_csv(episode, reports, prov)
        )
        _write_coefficients(destination / "coefficients.csv", result, prov)

    if with_attribution:
        with _stage("attribution"):
            low_model = models[triplet.tau_low]
            rows = attr.attribute_window(low_model, design)
            try:
                stability = attr.bootstrap_stability(
                    design,
                    triplet.tau_low,
                    replications=max(2, replications),
                    block_length=episode.bootstrap.block_length,
                    seed=int(seeds[2]),
                )
            except DegenerateSampleError as exc:
                diagnostics.append(f"attribution stability: {exc}")
                stability = None
            try:
                result.attributions = attr.importance_summary(rows, stability=stability)
            except DegenerateSampleError as exc:
                diagnostics.append(f"attribution: {exc}")
            result.attribution_rows = rows

    if write_outputs and destination is not None:
        if result.attribution_rows:
            _write_attribution(destination / "attribution.csv", result.attribution_rows, prov)
        _write_figures(destination / "figures", result, prov)
        _write_full_report(destination / "report.full", result)
        logger.info("outputs written to %s", destination)
    return result


@dataclass(frozen=True)
class SweepRow:
    residency: Residency
    hedge_effectiveness_pct: float
    tail_dependence: float
    tail_dependence_empirical: float | None
    delta_hedge_effectiveness_pct: float
    delta_tail_dependence: float
    delta_tail_dependence_empirical: float | None


@dataclass(frozen=True)
class SweepEntry:
    tau: float
    feasible: bool
    reason: str
    rows: tuple[SweepRow, ...] = ()


def sensitivity_sweep(
    episode: CrisisEpisode,
    taus: Sequence[float],
    *,
    fast: bool = False,
    out_dir: str | Path | None = None,
    write_outputs: bool = True,
) -> tuple[RunResult, list[SweepEntry]]:
    """Re-run the pipeline at alternative lower-tail levels and tabulate deltas.

    The base run executes in full (and writes its outputs); override runs
    skip cross-validation and attribution since the sweep compares only hedge
    effectiveness and tail dependence.  Infeasible levels are listed with a
    reason and the sweep continues.
    """
    base = run_pipeline(
        episode, fast=fast, out_dir=out_dir, write_outputs=write_outputs
    )
    base_by_res = {r.residency: r for r in base.reports}
    t_post = len(base.post_window)

    def rows_for(run: RunResult) -> tuple[SweepRow, ...]:
        rows = []
        for report in sorted(run.reports, key=lambda r: r.residency.value):
            ref = base_by_res.get(report.residency)
            if ref is None:
                continue
            emp = report.tail_dependence_empirical
            ref_emp = ref.tail_dependence_empirical
            rows.append(
                SweepRow(
                    residency=report.residency,
                    hedge_effectiveness_pct=report.hedge_effectiveness_pct,
                    tail_dependence=report.tail_dependence,
                    tail_dependence_empirical=emp,
                    delta_hedge_effectiveness_pct=(
                        report.hedge_effectiveness_pct - ref.hedge_effectiveness_pct
                    ),
                    delta_tail_dependence=report.tail_dependence - ref.tail_dependence,
                    delta_tail_dependence_empirical=(
                        emp - ref_emp if emp is not None and ref_emp is not None else None
                    ),
                )
            )
        return tuple(rows)

    entries: list[SweepEntry] = [
        SweepEntry(
            tau=base.triplet.tau_low,
            feasible=True,
            reason="base run",
            rows=rows_for(base),
        )
    ]
    for tau in taus:
        tau = float(tau)
        if not 0.0 < tau < 0.5:
            entries.append(
                SweepEntry(tau=tau, feasible=False, reason="not a lower-tail level")
            )
            continue
        if math.ceil(tau * t_post - CEIL_FUZZ) < MIN_TAIL_COUNT:
            entries.append(
                SweepEntry(
                    tau=tau,
                    feasible=False,
                    reason=(
                        f"fewer than {MIN_TAIL_COUNT} tail observations "
                        f"in {t_post} post-collapse months"
                    ),
                )
            )
            continue
        override = dataclasses.replace(episode, quantile_override=(tau,))
        run = run_pipeline(
            override,
            fast=fast,
            write_outputs=False,
            with_cv=False,
            with_attribution=False,
        )
        entries.append(
            SweepEntry(tau=tau, feasible=True, reason="", rows=rows_for(run))
        )

    if write_outputs:
        destination = resolve_out_dir(episode, out_dir)
        lines = [
            _provenance_line(base.provenance),
            "tau,feasible,reason,residency,he_pct,tail_dependence,"
            "tail_dependence_empirical,delta_he_pct,delta_tail_dependence,"
            "delta_tail_dependence_empirical",
        ]
        for entry in entries:
            if not entry.rows:
                lines.append(
                    f"{entry.tau!r},{entry.feasible},{entry.reason},,,,,,,"
                )
                continue
            for row in entry.rows:
                emp = "" if row.tail_dependence_empirical is None else repr(row.tail_dependence_empirical)
                demp = (
                    ""
                    if row.delta_tail_dependence_empirical is None
                    else repr(row.delta_tail_dependence_empirical)
                )
                lines.append(
                    f"{entry.tau!r},{entry.feasible},{entry.reason},"
                    f"{row.residency.value},{row.hedge_effectiveness_pct!r},"
                    f"{row.tail_dependence!r},{emp},"
                    f"{row.delta_hedge_effectiveness_pct!r},"
                    f"{row.delta_tail_dependence!r},{demp}"
                )
        _atomic_write(destination / "sweep.csv", "\n".join(lines) + "\n")
    return base, entries
