import argparse
import asyncio
import logging
from typing import Callable, Dict, Tuple

import pandas as pd

from ..core import analytic
from ..core.analytic import DriftParams, Sign
from ..core.command import (BaseCommand, CommandResult, UsageError, finite_float,
                            non_negative_int, positive_float)

logger = logging.getLogger(__name__)

DEFINE_THEORY = """
Evaluates closed-form and asymptotic record statistics, one row per step n = 0..n-max.
Quantities: record-rate, mean-records, survival, first-passage, p-sign (one row per n),
pi (symmetric record-number distribution, one row per (n, m)), asymptotic-rate and
crossover (a single row).
""".strip()

QUANTITIES = ("record-rate", "mean-records", "survival", "first-passage", "p-sign",
              "pi", "asymptotic-rate", "crossover")
REGIMES = ("symmetric", "small-drift", "large-drift")

PerStep = Callable[[int, DriftParams, Sign, bool], float]


def _symmetric_first_passage(n: int, *_) -> float:
    return analytic.record_rate_symmetric(n - 1) - analytic.record_rate_symmetric(n)


def _no_large_drift_survival_plus(n: int, params: DriftParams, sign: Sign, _) -> float:
    if sign is Sign.PLUS:
        raise UsageError("the large-drift survival expression covers the negative side only (--sign -)")
    return analytic.survival_large_drift(n, params)


def _large_drift_p_sign(n: int, params: DriftParams, sign: Sign, _) -> float:
    if sign is Sign.PLUS:
        raise UsageError("the large-drift sign probability covers the negative side only (--sign -)")
    return analytic.p_minus_large_drift(n, params)


# (quantity, regime) -> (value at n, value at n = 0 or None when the row is omitted)
FORMULAS: Dict[Tuple[str, str], Tuple[PerStep, float | None]] = {
    ("record-rate", "symmetric"): (lambda n, *_: analytic.record_rate_symmetric(n), 1.0),
    ("record-rate", "small-drift"): (
        lambda n, p, s, simple: analytic.record_rate_small_drift(n, p, simple), 1.0),
    ("record-rate", "large-drift"): (
        lambda n, p, *_: analytic.asymptotic_rate_large(p.ratio), 1.0),
    ("mean-records", "symmetric"): (lambda n, *_: analytic.mean_records_symmetric(n), 1.0),
    ("mean-records", "small-drift"): (
        lambda n, p, *_: analytic.mean_records_small_drift(n, p), 1.0),
    ("mean-records", "large-drift"): (
        lambda n, p, *_: analytic.mean_records_large_drift(n, p), None),
    ("survival", "symmetric"): (lambda n, *_: analytic.record_rate_symmetric(n), 1.0),
    ("survival", "small-drift"): (
        lambda n, p, s, _: analytic.survival_small_drift(n, p, s), 1.0),
    ("survival", "large-drift"): (_no_large_drift_survival_plus, 1.0),
    ("first-passage", "symmetric"): (_symmetric_first_passage, 0.0),
    ("first-passage", "small-drift"): (
        lambda n, p, s, _: analytic.first_passage_small_drift(n, p, s), 0.0),
    ("p-sign", "symmetric"): (lambda n, p, s, _: analytic.p_plus_minus(n, p, s), None),
    ("p-sign", "small-drift"): (
        lambda n, p, s, _: analytic.p_plus_minus_small_drift(n, p, s), None),
    ("p-sign", "large-drift"): (_large_drift_p_sign, None),
}


class TheoryCommand(BaseCommand):
    """Tabulates the `analytic` expressions."""
    name = "theory"
    definition = DEFINE_THEORY

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--quantity", choices=QUANTITIES, required=True)
        parser.add_argument("--regime", choices=REGIMES, default="symmetric")
        parser.add_argument("--c", type=finite_float, default=0.0, help="drift per step")
        parser.add_argument("--sigma", type=positive_float, default=1.0, help="jump standard deviation")
        parser.add_argument("--n-max", type=non_negative_int, default=100)
        parser.add_argument("--sign", choices=("+", "-"), default="+",
                            help="side for survival, first-passage and p-sign")
        parser.add_argument("--simplified", action="store_true",
                            help="large-n form of the small-drift record rate")
        parser.add_argument("--exact", action="store_true",
                            help="also report the exact asymptotic rate exp(-sum p_-(n)/n)")

    async def run(self, args: argparse.Namespace) -> CommandResult:
        params = DriftParams(c=args.c, sigma=args.sigma)
        parameters = {
            "quantity": args.quantity, "regime": args.regime, "c": args.c,
            "sigma": args.sigma, "n_max": args.n_max, "sign": args.sign,
            "simplified": args.simplified, "exact": args.exact,
        }
        if args.quantity == "asymptotic-rate":
            table = await asyncio.to_thread(self._asymptotic_rate, params, args.exact)
        elif args.quantity == "crossover":
            table = pd.DataFrame({"c_over_sigma": [params.ratio],
                                  "n_star": [analytic.crossover_time(params)]})
        elif args.quantity == "pi":
            table = self._pi_table(args.n_max)
        else:
            table = self._per_step(args.quantity, args.regime, params,
                                   Sign.parse(args.sign), args.n_max, args.simplified)
        return CommandResult(table=table, parameters=parameters)

    @staticmethod
    def _per_step(quantity: str, regime: str, params: DriftParams, sign: Sign,
                  n_max: int, simplified: bool) -> pd.DataFrame:
        try:
            formula, at_zero = FORMULAS[(quantity, regime)]
        except KeyError:
            raise UsageError(f"no {regime} expression for {quantity}")
        if regime == "large-drift" and params.c <= 0:
            raise UsageError("the large-drift regime needs --c > 0")
        rows = []
        if at_zero is not None:
            rows.append((0, at_zero))
        rows.extend((n, float(formula(n, params, sign, simplified))) for n in range(1, n_max + 1))
        return pd.DataFrame(rows, columns=["n", "value"])

    @staticmethod
    def _pi_table(n_max: int) -> pd.DataFrame:
        rows = [(n, m, analytic.pi_symmetric(m, n))
                for n in range(n_max + 1) for m in range(1, n + 2)]
        return pd.DataFrame(rows, columns=["n", "m", "value"])

    @staticmethod
    def _asymptotic_rate(params: DriftParams, exact: bool) -> pd.DataFrame:
        if params.c <= 0:
            raise UsageError("the asymptotic record rate needs --c > 0")
        ratio = params.ratio
        row = {
            "c_over_sigma": ratio,
            "value": analytic.asymptotic_record_rate(params),
            "small_branch": analytic.asymptotic_rate_small(ratio),
            "large_branch": analytic.asymptotic_rate_large(ratio),
            "crossover": analytic.asymptotic_rate_crossover(),
        }
        if exact:
            row["exact"] = analytic.asymptotic_record_rate_exact(params)
        return pd.DataFrame([row])
