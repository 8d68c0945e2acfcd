"""
ドリフト付きランダムウォークの再現可能な並列モンテカルロ。

乱数ストリームはカウンタベースの Philox を使い、実現値を固定サイズのブロックに
分けて、ブロック b のストリームを

    Generator(Philox(SeedSequence(entropy=seed, spawn_key=(b,))))

で作る。ブロックサイズは n_steps だけから決まり、ワーカー数には依存しない。
ブロックごとの集計はすべて整数カウンタで、合算は整数の加算なので、ワーカー数や
完了順によらず結果はビット単位で一致する。
"""
import asyncio
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from .analytic import DriftParams, Sign
from .config import DEFAULT_REALIZATIONS, DEFAULT_SEED, get_settings
from .records import upper_record_mask
from .series import JumpFamily

logger = logging.getLogger(__name__)

# ブロックあたりの実現値数の上限と、ブロック内で一度に生成する (実現値 × ステップ) の上限
BLOCK_REALIZATIONS = 4096
BLOCK_CELLS = 1 << 21
# 時間方向のチャンク長
CHUNK_STEPS = 256


@dataclass(frozen=True)
class SimConfig:
    """シミュレーションの設定。

    Attributes:
        family (JumpFamily): ジャンプ分布の族。一様分布は標準偏差 sigma
            (半幅 sqrt(3) sigma) でパラメータ化する。
        sigma (float): ジャンプの標準偏差 (> 0)。
        c (float): ドリフト。
        n_steps (int): ステップ数 (>= 1)。
        n_realizations (int): 実現値の数 (>= 1)。
        seed (int): 64ビット符号なし整数のシード。
        mirror (bool): True ならジャンプ列の符号を反転する(鏡像テスト用)。
    """
    family: JumpFamily = JumpFamily.GAUSSIAN
    sigma: float = 1.0
    c: float = 0.0
    n_steps: int = 100
    n_realizations: int = DEFAULT_REALIZATIONS
    seed: int = DEFAULT_SEED
    mirror: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", JumpFamily(self.family))
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if not math.isfinite(self.c):
            raise ValueError(f"drift c must be finite, got {self.c}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_realizations < 1:
            raise ValueError(f"n_realizations must be >= 1, got {self.n_realizations}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def params(self) -> DriftParams:
        return DriftParams(c=self.c, sigma=self.sigma)

    @property
    def block_size(self) -> int:
        return max(1, min(BLOCK_REALIZATIONS, BLOCK_CELLS // self.n_steps))

    @property
    def n_blocks(self) -> int:
        return -(-self.n_realizations // self.block_size)

    def with_drift(self, c: float) -> "SimConfig":
        return replace(self, c=c)


@dataclass(frozen=True)
class SimEstimate:
    """モンテカルロの点推定。"""
    value: float
    std_error: float
    n_realizations: int


@dataclass(frozen=True)
class EstimateSeries:
    """ステップごとの推定値の列。"""
    value: np.ndarray
    std_error: np.ndarray
    n_realizations: int

    def __len__(self) -> int:
        return len(self.value)

    def __getitem__(self, n: int) -> SimEstimate:
        return SimEstimate(float(self.value[n]), float(self.std_error[n]), self.n_realizations)


@dataclass(frozen=True)
class RecordStats:
    """上側・下側の記録率と平均記録数。"""
    config: SimConfig
    record_rate: EstimateSeries
    mean_records: EstimateSeries
    lower_record_rate: EstimateSeries
    lower_mean_records: EstimateSeries


@dataclass
class SimulationTally:
    """ブロックごとの整数集計。合算は可換な加算。"""
    n_steps: int
    realizations: int = 0
    upper_hits: np.ndarray = field(default=None)
    lower_hits: np.ndarray = field(default=None)
    upper_count_sumsq: np.ndarray = field(default=None)
    lower_count_sumsq: np.ndarray = field(default=None)
    survival_plus: np.ndarray = field(default=None)
    survival_minus: np.ndarray = field(default=None)
    tail_sum: int = 0
    tail_sumsq: int = 0

    def __post_init__(self):
        for name in ("upper_hits", "lower_hits", "upper_count_sumsq",
                     "lower_count_sumsq", "survival_plus", "survival_minus"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.n_steps + 1, dtype=np.int64))

    def merge(self, other: "SimulationTally") -> "SimulationTally":
        if other.n_steps != self.n_steps:
            raise ValueError("cannot merge tallies of different lengths")
        return SimulationTally(
            n_steps=self.n_steps,
            realizations=self.realizations + other.realizations,
            upper_hits=self.upper_hits + other.upper_hits,
            lower_hits=self.lower_hits + other.lower_hits,
            upper_count_sumsq=self.upper_count_sumsq + other.upper_count_sumsq,
            lower_count_sumsq=self.lower_count_sumsq + other.lower_count_sumsq,
            survival_plus=self.survival_plus + other.survival_plus,
            survival_minus=self.survival_minus + other.survival_minus,
            tail_sum=self.tail_sum + other.tail_sum,
            tail_sumsq=self.tail_sumsq + other.tail_sumsq,
        )


def block_generator(seed: int, block_index: int) -> np.random.Generator:
    """ブロック番号をシードに混ぜたカウンタベースの乱数ストリーム。"""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(block_index,))
    return np.random.Generator(np.random.Philox(sequence))


def _draw_jumps(rng: np.random.Generator, config: SimConfig, shape) -> np.ndarray:
    if config.family is JumpFamily.UNIFORM:
        half_width = math.sqrt(3.0) * config.sigma
        jumps = rng.uniform(-half_width, half_width, size=shape)
    else:
        jumps = rng.standard_normal(size=shape) * config.sigma
    return -jumps if config.mirror else jumps


def simulate_block(config: SimConfig, block_index: int,
                   tail_start: Optional[int] = None) -> SimulationTally:
    """
    1ブロック分の実現値を生成して整数集計を返す。経路全体は保持しない。

    tail_start 以降のステップの上側記録数を実現値ごとに数え、その和と二乗和を持つ。
    """
    start = block_index * config.block_size
    size = min(config.block_size, config.n_realizations - start)
    if size <= 0:
        raise ValueError(f"block {block_index} is empty for {config.n_realizations} realizations")
    n = config.n_steps
    tail_start = n + 1 if tail_start is None else tail_start
    rng = block_generator(config.seed, block_index)

    tally = SimulationTally(n_steps=n, realizations=size)
    # ステップ 0 は上側・下側とも記録で、生存している
    for counts in (tally.upper_hits, tally.lower_hits, tally.upper_count_sumsq,
                   tally.lower_count_sumsq, tally.survival_plus, tally.survival_minus):
        counts[0] = size

    position = np.zeros(size)
    running_max = np.zeros(size)
    running_min = np.zeros(size)
    upper_count = np.ones(size, dtype=np.int64)
    lower_count = np.ones(size, dtype=np.int64)
    alive_plus = np.ones(size, dtype=bool)
    alive_minus = np.ones(size, dtype=bool)
    tail_counts = np.zeros(size, dtype=np.int64)

    for first in range(1, n + 1, CHUNK_STEPS):
        width = min(CHUNK_STEPS, n + 1 - first)
        steps = _draw_jumps(rng, config, (size, width)) + config.c
        path = position[:, None] + np.cumsum(steps, axis=1)
        window = slice(first, first + width)

        upper = upper_record_mask(path, axis=1, initial=running_max)
        lower = upper_record_mask(-path, axis=1, initial=-running_min)
        running_max = np.maximum(running_max, path.max(axis=1))
        running_min = np.minimum(running_min, path.min(axis=1))

        upper_cum = upper_count[:, None] + np.cumsum(upper, axis=1)
        lower_cum = lower_count[:, None] + np.cumsum(lower, axis=1)
        tally.upper_hits[window] = upper.sum(axis=0)
        tally.lower_hits[window] = lower.sum(axis=0)
        tally.upper_count_sumsq[window] = (upper_cum * upper_cum).sum(axis=0)
        tally.lower_count_sumsq[window] = (lower_cum * lower_cum).sum(axis=0)
        upper_count = upper_cum[:, -1]
        lower_count = lower_cum[:, -1]

        # 原点ちょうどに来た経路は死亡扱い
        survive_plus = alive_plus[:, None] & np.logical_and.accumulate(path > 0.0, axis=1)
        survive_minus = alive_minus[:, None] & np.logical_and.accumulate(path < 0.0, axis=1)
        tally.survival_plus[window] = survive_plus.sum(axis=0)
        tally.survival_minus[window] = survive_minus.sum(axis=0)
        alive_plus = survive_plus[:, -1]
        alive_minus = survive_minus[:, -1]

        offset = max(tail_start - first, 0)
        if offset < width:
            tail_counts += upper[:, offset:].sum(axis=1)
        position = path[:, -1]

    tally.tail_sum = int(tail_counts.sum())
    tally.tail_sumsq = int((tail_counts * tail_counts).sum())
    return tally


class SimulationRunner:
    """
    ブロック単位のシミュレーションをスレッドに割り振り、整数集計を合算するクラス。
    """

    def __init__(self, workers: Optional[int] = None):
        self.workers = get_settings().threads if workers is None else workers
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    async def run(self, config: SimConfig, tail_start: Optional[int] = None) -> SimulationTally:
        """全ブロックを並行に実行し、合算した集計を返す。"""
        semaphore = asyncio.Semaphore(self.workers)

        async def run_block(block_index: int) -> SimulationTally:
            async with semaphore:
                # 重い数値計算はイベントループを塞がないよう別スレッドで実行する
                return await asyncio.to_thread(simulate_block, config, block_index, tail_start)

        logger.info(
            f"Simulating {config.n_realizations} realizations x {config.n_steps} steps "
            f"(c={config.c}, sigma={config.sigma}, {config.family.value}) in "
            f"{config.n_blocks} block(s) on {self.workers} worker(s)."
        )
        tasks = [asyncio.create_task(run_block(b)) for b in range(config.n_blocks)]
        total = SimulationTally(n_steps=config.n_steps)
        try:
            for finished in asyncio.as_completed(tasks):
                total = total.merge(await finished)
                logger.debug(f"Merged {total.realizations}/{config.n_realizations} realizations.")
        except BaseException:
            for task in tasks:
                task.cancel()
            raise
        logger.info(f"Simulation finished: {total.realizations} realizations merged.")
        return total


def run_simulation(config: SimConfig, tail_start: Optional[int] = None,
                   workers: Optional[int] = None) -> SimulationTally:
    """SimulationRunner.run の同期版。"""
    return asyncio.run(SimulationRunner(workers).run(config, tail_start))


def _proportion(hits: np.ndarray, total: int) -> EstimateSeries:
    p = hits / total
    return EstimateSeries(p, np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / total), total)


def _mean_count(hits: np.ndarray, sumsq: np.ndarray, total: int) -> EstimateSeries:
    mean = np.cumsum(hits) / total
    if total > 1:
        variance = np.clip((sumsq - total * mean * mean) / (total - 1), 0.0, None)
        error = np.sqrt(variance / total)
    else:
        error = np.zeros_like(mean)
    return EstimateSeries(mean, error, total)


def record_stats_from_tally(config: SimConfig, tally: SimulationTally) -> RecordStats:
    total = tally.realizations
    return RecordStats(
        config=config,
        record_rate=_proportion(tally.upper_hits, total),
        mean_records=_mean_count(tally.upper_hits, tally.upper_count_sumsq, total),
        lower_record_rate=_proportion(tally.lower_hits, total),
        lower_mean_records=_mean_count(tally.lower_hits, tally.lower_count_sumsq, total),
    )


def survival_from_tally(tally: SimulationTally, sign: "Sign | str") -> EstimateSeries:
    hits = tally.survival_plus if Sign.parse(sign) is Sign.PLUS else tally.survival_minus
    return _proportion(hits, tally.realizations)


def simulate_record_stats(config: SimConfig, workers: Optional[int] = None) -> RecordStats:
    """ステップごとの記録率 P_n(c) と平均記録数 m_n(c) の推定値。"""
    return record_stats_from_tally(config, run_simulation(config, workers=workers))


def simulate_survival(config: SimConfig, sign: "Sign | str",
                      workers: Optional[int] = None) -> EstimateSeries:
    """生存確率 q±(n) の推定値。X_k > 0 (あるいは < 0) を厳密に要求する。"""
    return survival_from_tally(run_simulation(config, workers=workers), sign)


def default_tail(n_steps: int) -> int:
    return max(1, n_steps // 2)


def tail_estimate(config: SimConfig, tally: SimulationTally, n_tail: int) -> SimEstimate:
    total = tally.realizations
    mean = tally.tail_sum / (total * n_tail)
    if total > 1:
        per_walk = (tally.tail_sumsq - tally.tail_sum ** 2 / total) / (total - 1)
        error = math.sqrt(max(per_walk, 0.0) / total) / n_tail
    else:
        error = 0.0
    return SimEstimate(mean, error, total)


def estimate_asymptotic_rate(config: SimConfig, n_tail: Optional[int] = None,
                             workers: Optional[int] = None) -> SimEstimate:
    """
    最後の n_tail ステップ(既定は後半)と実現値について記録の指示関数を平均する。

    誤差は実現値ごとの末尾平均のばらつきから求めるので、ステップ間の相関を含む。
    n ≫ n*(c) での使用を想定している。
    """
    n_tail = default_tail(config.n_steps) if n_tail is None else n_tail
    if not 1 <= n_tail <= config.n_steps:
        raise ValueError(f"n_tail must lie in [1, {config.n_steps}], got {n_tail}")
    tail_start = config.n_steps - n_tail + 1
    tally = run_simulation(config, tail_start=tail_start, workers=workers)
    return tail_estimate(config, tally, n_tail)


def scaling_points(stats: RecordStats) -> pd.DataFrame:
    """1つのドリフトについての (x, g) 点列。"""
    config = stats.config
    ratio = config.params.ratio
    if ratio <= 0:
        raise ValueError(f"the scaling function needs c > 0, got c={config.c}")
    n = np.arange(1, config.n_steps + 1)
    return pd.DataFrame({
        "c": config.c,
        "n": n,
        "x": ratio * ratio * n,
        "g": stats.record_rate.value[1:] / ratio,
        "std_error": stats.record_rate.std_error[1:] / ratio,
    })


def estimate_scaling_function(c_values: Iterable[float], config: SimConfig,
                              workers: Optional[int] = None) -> pd.DataFrame:
    """
    各ドリフトについて記録率をシミュレーションし、x = (c/σ)² n, g = P_n(c) σ/c の表を返す。
    """
    frames = []
    for c in c_values:
        stats = simulate_record_stats(config.with_drift(float(c)), workers=workers)
        frames.append(scaling_points(stats))
    if not frames:
        raise ValueError("estimate_scaling_function needs at least one drift value")
    return pd.concat(frames, ignore_index=True)
