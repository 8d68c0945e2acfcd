import argparse
import asyncio
import logging
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from ..core import findata
from ..core.analytic import DriftParams, mean_records_linear_drift
from ..core.command import (BaseCommand, CommandResult, UsageError, non_negative_int,
                            positive_int, seed_value)
from ..core.config import DEFAULT_SEED
from ..core.findata import EnsembleRecordReport, PriceSeries, SigmaMode
from ..core.series import RecordSeries

logger = logging.getLogger(__name__)

DEFINE_ANALYZE = """
Record statistics of daily closing prices (CSV with columns date, ticker, close), or of a
synthetic ensemble of geometric Gaussian walks generated with --synthetic.
--emit raw-records | detrended-records | windowed print the ticker-averaged upper and lower
record counts per trading day; --emit drift-summary prints the per-ticker trend fits.
""".strip()

EMITS = ("raw-records", "detrended-records", "windowed", "drift-summary")


def _parse_synthetic(values: List[str]) -> Tuple[int, int, float]:
    n_tickers, n_steps, mean = values
    try:
        return int(n_tickers), int(n_steps), float(mean)
    except ValueError:
        raise UsageError(
            f"--synthetic expects <n_tickers:int> <n_steps:int> <mean_c_over_sigma:float>, got {values}"
        )


def _final_counts(report: EnsembleRecordReport) -> Dict[str, Any]:
    return {
        "n_series": report.n_series,
        "horizon": report.horizon,
        "final_mean_upper": float(report.mean_upper[-1]),
        "final_mean_lower": float(report.mean_lower[-1]),
    }


class AnalyzeCommand(BaseCommand):
    """Runs the `findata` pipeline on a price file or a synthetic ensemble."""
    name = "analyze"
    definition = DEFINE_ANALYZE

    def add_arguments(self, parser: argparse.ArgumentParser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument("--input", help="price CSV (date, ticker, close)")
        source.add_argument("--synthetic", nargs=3, metavar=("N_TICKERS", "N_STEPS", "MEAN_C_OVER_SIGMA"),
                            help="generate a synthetic ensemble instead of reading --input")
        parser.add_argument("--seed", type=seed_value, default=DEFAULT_SEED, help="seed for --synthetic")
        parser.add_argument("--spread", type=float, default=0.5,
                            help="relative spread of c/sigma across synthetic tickers")
        parser.add_argument("--write-synthetic", metavar="PATH",
                            help="also write the synthetic ensemble as a price CSV")
        parser.add_argument("--emit", choices=EMITS, required=True)
        parser.add_argument("--window-len", type=positive_int, help="window length for --emit windowed")
        parser.add_argument("--sigma-mode", choices=[m.value for m in SigmaMode],
                            default=SigmaMode.DETRENDED.value)
        parser.add_argument("--min-length", type=non_negative_int, default=findata.DEFAULT_MIN_LENGTH,
                            help="drop tickers with fewer rows")

    async def run(self, args: argparse.Namespace) -> CommandResult:
        if args.emit == "windowed" and args.window_len is None:
            raise UsageError("--emit windowed requires --window-len")
        if args.write_synthetic and not args.synthetic:
            raise UsageError("--write-synthetic requires --synthetic")

        parameters: Dict[str, Any] = {
            "input": args.input, "emit": args.emit, "window_len": args.window_len,
            "sigma_mode": args.sigma_mode, "min_length": args.min_length,
        }
        seed = None
        if args.synthetic:
            n_tickers, n_steps, mean = _parse_synthetic(args.synthetic)
            seed = args.seed
            parameters.update({"synthetic": {"n_tickers": n_tickers, "n_steps": n_steps,
                                             "mean_c_over_sigma": mean},
                               "spread": args.spread})
            series = await asyncio.to_thread(
                findata.generate_synthetic_prices, n_tickers, n_steps, mean, seed, args.spread
            )
            if args.write_synthetic:
                await asyncio.to_thread(findata.write_prices_csv, series, args.write_synthetic)
        else:
            series = await asyncio.to_thread(findata.load_prices, args.input, args.min_length)
        if not series:
            raise findata.PriceDataError("no ticker has enough rows to analyze")

        table, summary = await asyncio.to_thread(
            self._analyze, series, args.emit, args.window_len, SigmaMode(args.sigma_mode)
        )
        return CommandResult(table=table, parameters=parameters, seed=seed, summary=summary)

    @staticmethod
    def _analyze(series: List[PriceSeries], emit: str, window_len: int | None,
                 sigma_mode: SigmaMode) -> Tuple[pd.DataFrame, Dict[str, Any]]:
        if emit == "drift-summary":
            table, mean, error = findata.drift_summary(series, sigma_mode)
            return table, {"mean_c_over_sigma": mean, "std_error": error, "n_series": len(series)}

        if emit == "windowed":
            report = findata.windowed_analysis(series, window_len)
            return report.to_frame(), _final_counts(report)

        reports = findata.detrended_record_counts(series)
        if emit == "detrended-records":
            return reports.detrended.to_frame(), _final_counts(reports.detrended)

        # トレンドを残した記録数には、平均ドリフトでの厳密な m_n と線形参照線を並べる
        report = reports.raw
        mean = findata.normalized_drift_average(findata.fit_all(series, sigma_mode))
        table = report.to_frame()
        params = DriftParams(c=mean, sigma=1.0)
        table["linear_drift_reference"] = [
            mean_records_linear_drift(int(n), params) for n in np.arange(report.horizon)
        ]
        exact = RecordSeries.from_params(params, order=report.horizon - 1).mean_records.coeffs
        table["series_reference"] = exact
        summary = _final_counts(report)
        summary["mean_c_over_sigma"] = mean
        summary["final_series_reference"] = float(exact[-1])
        return table, summary
