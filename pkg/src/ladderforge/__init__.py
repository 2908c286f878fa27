"""Per-shot rate-distortion-complexity optimization for bitrate ladders."""

from .assembler import (
    LadderQuery,
    MultiplierGrid,
    RdtTable,
    Rung,
    assemble,
    build_multiplier_grid,
    complexity_ratio,
    generate_table,
    query_ladder,
    rate_time_balance,
)
from .hull import filter_hull_3d, filter_pareto
from .metrics import RdCurve, bd_rate, comparison_report, matched_complexity_ladder
from .model import (
    DataError,
    DegenerateDataError,
    EncodeParams,
    MultiplierPair,
    OperatingPoint,
    RdtFit,
    RdtTableRow,
    Representation,
    ShotRecord,
    mse_from_psnr,
    psnr_from_mse,
    validate_dataset,
)
from .rdtfit import analyze_shot, fit_rdt, multipliers
from .synth import SynthConfig, gen_dataset, gen_shot

__version__ = "0.1.0"

__all__ = [
    "analyze_shot",
    "assemble",
    "bd_rate",
    "build_multiplier_grid",
    "comparison_report",
    "complexity_ratio",
    "DataError",
    "DegenerateDataError",
    "EncodeParams",
    "filter_hull_3d",
    "filter_pareto",
    "fit_rdt",
    "gen_dataset",
    "gen_shot",
    "generate_table",
    "LadderQuery",
    "matched_complexity_ladder",
    "mse_from_psnr",
    "MultiplierGrid",
    "MultiplierPair",
    "multipliers",
    "OperatingPoint",
    "psnr_from_mse",
    "query_ladder",
    "rate_time_balance",
    "RdCurve",
    "RdtFit",
    "RdtTable",
    "RdtTableRow",
    "Representation",
    "Rung",
    "ShotRecord",
    "SynthConfig",
    "validate_dataset",
]
