import argparse
import asyncio
import logging
import math
from typing import List, Optional

import numpy as np
import pandas as pd

from ..core import analytic
from ..core.analytic import DriftParams, Sign
from ..core.command import (BaseCommand, CommandResult, UsageError, finite_float,
                            positive_float, positive_int, seed_value)
from ..core.config import DEFAULT_REALIZATIONS, DEFAULT_SEED
from ..core.montecarlo import (SimConfig, SimulationRunner, default_tail, record_stats_from_tally,
                               scaling_points, survival_from_tally, tail_estimate)
from ..core.series import JumpFamily, RecordSeries

logger = logging.getLogger(__name__)

DEFINE_SIMULATE = """
Monte Carlo estimates for the drifted random walk X_n = X_{n-1} + xi_n + c, X_0 = 0.
--emit record-rate | mean-records | survival-pos | survival-neg print one row per step with the
estimate, its standard error and the closed-form and generating-function references.
--emit scaling prints (x, g) points for every drift in --c-values; --emit asymptotic-rate
averages the record indicator over the last --tail steps.
""".strip()

EMITS = ("record-rate", "mean-records", "survival-pos", "survival-neg", "scaling",
         "asymptotic-rate")


def analytic_reference(emit: str, params: DriftParams, n_steps: int) -> np.ndarray:
    """閉形式の参照値。c = 0 では厳密な対称式、それ以外では小ドリフト近似を使う。"""
    if params.c == 0:
        q = analytic.record_rate_symmetric_table(n_steps)
        if emit == "mean-records":
            return (2 * np.arange(n_steps + 1) + 1) * q
        return q
    values = np.empty(n_steps + 1)
    values[0] = 1.0
    for n in range(1, n_steps + 1):
        if emit == "record-rate":
            values[n] = analytic.record_rate_small_drift(n, params)
        elif emit == "mean-records":
            values[n] = analytic.mean_records_small_drift(n, params)
        else:
            sign = Sign.PLUS if emit == "survival-pos" else Sign.MINUS
            values[n] = analytic.survival_small_drift(n, params, sign)
    return values


def series_reference(emit: str, config: SimConfig) -> np.ndarray:
    bundle = RecordSeries.from_params(config.params, order=config.n_steps, family=config.family)
    if emit == "record-rate":
        return bundle.record_rate.coeffs
    if emit == "mean-records":
        return bundle.mean_records.coeffs
    # 鏡像モードでもジャンプ分布は対称なので、参照値は変わらない
    return (bundle.q_plus if emit == "survival-pos" else bundle.q_minus).coeffs


class SimulateCommand(BaseCommand):
    """Runs `montecarlo` and tabulates the estimates next to their references."""
    name = "simulate"
    definition = DEFINE_SIMULATE

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--dist", choices=[f.value for f in JumpFamily],
                            default=JumpFamily.GAUSSIAN.value, help="jump distribution")
        parser.add_argument("--c", type=finite_float, default=0.0, help="drift per step")
        parser.add_argument("--sigma", type=positive_float, default=1.0, help="jump standard deviation")
        parser.add_argument("--steps", type=positive_int, default=100, help="number of steps n")
        parser.add_argument("--reals", type=positive_int, default=DEFAULT_REALIZATIONS,
                            help="number of realizations")
        parser.add_argument("--seed", type=seed_value, default=DEFAULT_SEED, help="unsigned 64-bit seed")
        parser.add_argument("--emit", choices=EMITS, default="record-rate")
        parser.add_argument("--c-values", type=finite_float, nargs="+",
                            help="drifts for --emit scaling (default: --c)")
        parser.add_argument("--tail", type=positive_int,
                            help="steps averaged by --emit asymptotic-rate (default: last half)")
        parser.add_argument("--workers", type=positive_int,
                            help="worker threads (default: RECORD_WALK_THREADS)")
        parser.add_argument("--mirror", action="store_true", help="negate every jump")
        parser.add_argument("--no-reference", action="store_true",
                            help="skip the analytic and series reference columns")

    async def run(self, args: argparse.Namespace) -> CommandResult:
        config = SimConfig(
            family=JumpFamily(args.dist), sigma=args.sigma, c=args.c, n_steps=args.steps,
            n_realizations=args.reals, seed=args.seed, mirror=args.mirror,
        )
        runner = SimulationRunner(args.workers)
        parameters = {
            "dist": config.family.value, "c": args.c, "sigma": args.sigma, "steps": args.steps,
            "reals": args.reals, "emit": args.emit, "c_values": args.c_values, "tail": args.tail,
            "workers": runner.workers, "mirror": args.mirror, "reference": not args.no_reference,
        }
        summary = {}
        if args.emit == "scaling":
            table = await self._scaling(runner, config, args.c_values or [args.c])
        elif args.emit == "asymptotic-rate":
            table = await self._asymptotic_rate(runner, config, args.tail, not args.no_reference)
            summary = {"estimate": float(table["estimate"].iloc[0]),
                       "std_error": float(table["std_error"].iloc[0])}
        else:
            table = await self._per_step(runner, config, args.emit, not args.no_reference)
            summary = self._regime(config, not args.no_reference)
        return CommandResult(table=table, parameters=parameters, seed=args.seed, summary=summary)

    @staticmethod
    def _regime(config: SimConfig, with_reference: bool) -> dict:
        # 小ドリフトの閉形式は n < n* = (σ/c)² でしか使えない
        n_star = analytic.crossover_time(config.params)
        small_drift = config.n_steps < n_star
        if with_reference and not small_drift:
            logger.warning(
                f"--steps {config.n_steps} reaches n* = {n_star:.4g}; the small-drift `analytic` "
                f"column is outside its range, compare with `series` instead."
            )
        return {"n_star": None if math.isinf(n_star) else n_star, "small_drift_regime": small_drift}

    @staticmethod
    async def _per_step(runner: SimulationRunner, config: SimConfig, emit: str,
                        with_reference: bool) -> pd.DataFrame:
        tally = await runner.run(config)
        n = np.arange(config.n_steps + 1)
        if emit in ("record-rate", "mean-records"):
            stats = record_stats_from_tally(config, tally)
            upper, lower = ((stats.record_rate, stats.lower_record_rate) if emit == "record-rate"
                            else (stats.mean_records, stats.lower_mean_records))
            table = pd.DataFrame({
                "n": n,
                "estimate": upper.value,
                "std_error": upper.std_error,
                "lower_estimate": lower.value,
                "lower_std_error": lower.std_error,
            })
        else:
            sign = Sign.PLUS if emit == "survival-pos" else Sign.MINUS
            survival = survival_from_tally(tally, sign)
            table = pd.DataFrame({"n": n, "estimate": survival.value, "std_error": survival.std_error})

        if with_reference:
            table["analytic"] = analytic_reference(emit, config.params, config.n_steps)
            table["series"] = await asyncio.to_thread(series_reference, emit, config)
        return table

    @staticmethod
    async def _scaling(runner: SimulationRunner, config: SimConfig,
                       c_values: List[float]) -> pd.DataFrame:
        if any(c <= 0 for c in c_values):
            raise UsageError(f"--emit scaling needs positive drifts, got {c_values}")
        frames = []
        for c in c_values:
            drifted = config.with_drift(c)
            tally = await runner.run(drifted)
            frames.append(scaling_points(record_stats_from_tally(drifted, tally)))
        table = pd.concat(frames, ignore_index=True)
        limits = [analytic.scaling_function_limits(x) for x in table["x"]]
        table["g_small_x"] = [limit.small_x for limit in limits]
        table["g_large_x"] = [limit.large_x for limit in limits]
        return table

    @staticmethod
    async def _asymptotic_rate(runner: SimulationRunner, config: SimConfig,
                               n_tail: Optional[int], with_reference: bool) -> pd.DataFrame:
        n_tail = default_tail(config.n_steps) if n_tail is None else n_tail
        if n_tail > config.n_steps:
            raise UsageError(f"--tail {n_tail} exceeds --steps {config.n_steps}")
        tally = await runner.run(config, tail_start=config.n_steps - n_tail + 1)
        estimate = tail_estimate(config, tally, n_tail)
        row = {
            "c_over_sigma": config.params.ratio,
            "n_tail": n_tail,
            "estimate": estimate.value,
            "std_error": estimate.std_error,
            "n_star": analytic.crossover_time(config.params),
        }
        if with_reference and config.c > 0:
            row["analytic"] = analytic.asymptotic_record_rate(config.params)
            row["exact"] = await asyncio.to_thread(analytic.asymptotic_record_rate_exact, config.params)
        return pd.DataFrame([row])
