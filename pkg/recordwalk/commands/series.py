import argparse
import asyncio
import logging

import numpy as np
import pandas as pd

from ..core.analytic import DriftParams, Sign
from ..core.command import (BaseCommand, CommandResult, finite_float, non_negative_int,
                            positive_float, positive_int)
from ..core.config import DEFAULT_ORDER
from ..core.series import JumpFamily, RecordSeries

logger = logging.getLogger(__name__)

DEFINE_SERIES = """
Runs the generating-function engine and prints coefficients n = 0..order of one series:
q (survival), f (first passage), pi (probability of exactly m records), mean (mean number
of records) or rate (record rate). --sign picks the side for q and f.
""".strip()

EMITS = ("q", "f", "pi", "mean", "rate")
# 確率として表示する係数。丸め誤差による僅かな負値は表示時だけ [0, 1] に収める
PROBABILITY_EMITS = {"q", "f", "pi", "rate"}


class SeriesCommand(BaseCommand):
    """Prints one coefficient sequence of `RecordSeries`."""
    name = "series"
    definition = DEFINE_SERIES

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--c", type=finite_float, default=0.0, help="drift per step")
        parser.add_argument("--sigma", type=positive_float, default=1.0, help="jump standard deviation")
        parser.add_argument("--order", type=non_negative_int, default=DEFAULT_ORDER,
                            help="truncation order N (coefficients 0..N)")
        parser.add_argument("--emit", choices=EMITS, required=True)
        parser.add_argument("--sign", choices=("+", "-"), default="-",
                            help="side for q and f")
        parser.add_argument("--m", type=positive_int, default=1, help="record count for --emit pi")
        parser.add_argument("--dist", choices=[f.value for f in JumpFamily],
                            default=JumpFamily.GAUSSIAN.value, help="jump distribution")

    async def run(self, args: argparse.Namespace) -> CommandResult:
        params = DriftParams(c=args.c, sigma=args.sigma)
        family = JumpFamily(args.dist)
        bundle = await asyncio.to_thread(RecordSeries.from_params, params, args.order, family)
        sign = Sign.parse(args.sign)
        if args.emit == "q":
            values = (bundle.q_plus if sign is Sign.PLUS else bundle.q_minus).coeffs
        elif args.emit == "f":
            values = (bundle.f_plus if sign is Sign.PLUS else bundle.f_minus).coeffs
        elif args.emit == "pi":
            values = (await asyncio.to_thread(bundle.pi, args.m)).coeffs
        elif args.emit == "mean":
            values = bundle.mean_records.coeffs
        else:
            values = bundle.record_rate.coeffs

        if args.emit in PROBABILITY_EMITS:
            values = np.clip(values, 0.0, 1.0)
        table = pd.DataFrame({"n": np.arange(values.size), "value": values})
        parameters = {
            "c": args.c, "sigma": args.sigma, "order": args.order, "emit": args.emit,
            "sign": args.sign, "m": args.m, "dist": family.value,
        }
        return CommandResult(table=table, parameters=parameters)
