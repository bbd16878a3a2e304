"""Crisis-window analysis of equities as inflation and depreciation hedges.

The package takes one country episode (a crisis date inside an observation
window, plus a panel of monthly macro series), measures how well local
equities protected local and foreign residents through the collapse, and
explains the tail behaviour with quantile regressions, copula fits, and
exact additive attribution.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .config import BootstrapConfig, CrisisEpisode, CVConfig, load_episode
from .copula import CopulaFamily, CopulaFit, PseudoSample, fit_copula, simulate_copula
from .dataio import MacroSeries, fuse_hybrid, load_manifest, load_panel, load_series
from .errors import (
    ConfigError,
    CrisisHedgeError,
    DataError,
    DegenerateSampleError,
    EndogeneityError,
    FitError,
    NumericalError,
)
from .fixtures import FixtureKind, generate_fixture
from .hedge import HedgeReport, Residency, hedge_effectiveness
from .pipeline import RunResult, run_pipeline, sensitivity_sweep
from .qreg import FeatureSchema, QuantileModel, fit_quantile
from .returns import ReturnSeries, real_return_domestic, real_return_foreign
from .tailsel import TailQuantileTriplet, build_triplet

__all__ = [
    "__version__",
    "BootstrapConfig",
    "ConfigError",
    "CopulaFamily",
    "CopulaFit",
    "CrisisEpisode",
    "CrisisHedgeError",
    "CVConfig",
    "DataError",
    "DegenerateSampleError",
    "EndogeneityError",
    "FeatureSchema",
    "FitError",
    "FixtureKind",
    "fit_copula",
    "fit_quantile",
    "fuse_hybrid",
    "generate_fixture",
    "HedgeReport",
    "hedge_effectiveness",
    "load_episode",
    "load_manifest",
    "load_panel",
    "load_series",
    "MacroSeries",
    "NumericalError",
    "PseudoSample",
    "QuantileModel",
    "real_return_domestic",
    "real_return_foreign",
    "Residency",
    "ReturnSeries",
    "run_pipeline",
    "RunResult",
    "sensitivity_sweep",
    "simulate_copula",
    "TailQuantileTriplet",
    "build_triplet",
]
