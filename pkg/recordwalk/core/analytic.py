"""
記録統計の閉形式・漸近式を純粋な数値関数として評価するモジュール。

誤差関数には scipy.special の erf / erfc (Cephes の有理近似、倍精度で相対誤差
1e-15 程度) を使う。負側の符号確率は 1 - erf ではなく erfc で評価するので、
裾でも桁落ちしない。
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Optional

import numpy as np
from scipy import optimize, special

from .config import get_settings

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)


class Sign(Enum):
    """原点より上側(+)か下側(-)かを表す列挙型"""
    PLUS = "+"
    MINUS = "-"

    @property
    def factor(self) -> int:
        return 1 if self is Sign.PLUS else -1

    @classmethod
    def parse(cls, value: "Sign | str") -> "Sign":
        if isinstance(value, cls):
            return value
        aliases = {"+": cls.PLUS, "plus": cls.PLUS, "pos": cls.PLUS,
                   "-": cls.MINUS, "minus": cls.MINUS, "neg": cls.MINUS}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"Unknown sign {value!r}; expected '+' or '-'.")


@dataclass(frozen=True)
class DriftParams:
    """ランダムウォーク X_n = X_{n-1} + xi_n + c のドリフトとジャンプ幅。

    Attributes:
        c (float): 1ステップあたりのドリフト。
        sigma (float): ジャンプの標準偏差 (> 0)。
    """
    c: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise ValueError(f"drift c must be finite, got {self.c}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def ratio(self) -> float:
        """規格化ドリフト c/sigma。"""
        return self.c / self.sigma


def _require_positive_drift(params: DriftParams):
    if params.c <= 0:
        raise ValueError(f"this expression needs c > 0, got c={params.c}")


# --- 対称ウォーク ---------------------------------------------------------------

def _pi_printed(m: int, n: int) -> float:
    k = 2 * n - m + 1
    return math.comb(k, m) / (1 << k) if k >= 0 else 0.0


def _pi_corrected(m: int, n: int) -> float:
    k = 2 * n - m + 1
    return math.comb(k, n) / (1 << k)


# 記録数分布の二つの読み方。どちらを採用するかは級数エンジンとの照合で決める
# (series.resolve_pi_symmetric_variant)。
PI_SYMMETRIC_VARIANTS: Dict[str, Callable[[int, int], float]] = {
    "printed": _pi_printed,
    "corrected": _pi_corrected,
}
PI_SYMMETRIC_VARIANT = "corrected"


def pi_symmetric(m: int, n: int, variant: str = PI_SYMMETRIC_VARIANT) -> float:
    """
    対称な連続ジャンプのウォークが n ステップ後にちょうど m 個の記録を持つ確率。

    整数の二項係数を 2 の冪で割るので、結果は正しく丸められた倍精度値になる。
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if not 1 <= m <= n + 1:
        raise ValueError(f"m must lie in [1, {n + 1}] for n={n}, got {m}")
    try:
        formula = PI_SYMMETRIC_VARIANTS[variant]
    except KeyError:
        raise ValueError(f"Unknown variant {variant!r}; choose from {sorted(PI_SYMMETRIC_VARIANTS)}")
    return formula(m, n)


def record_rate_symmetric_table(n_max: int) -> np.ndarray:
    """q(n) = binom(2n, n) 2^(-2n) を n = 0..n_max について返す。"""
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative, got {n_max}")
    k = np.arange(1, n_max + 1, dtype=float)
    table = np.empty(n_max + 1)
    table[0] = 1.0
    # q(n) = q(n-1) (2n-1)/(2n)
    table[1:] = np.cumprod((2.0 * k - 1.0) / (2.0 * k))
    return table


def record_rate_symmetric(n: int) -> float:
    """対称ウォークの記録率(=生存確率) binom(2n, n) 2^(-2n)。"""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    return float(record_rate_symmetric_table(n)[-1])


def mean_records_symmetric(n: int) -> float:
    """対称ウォークの平均記録数 (2n+1) binom(2n, n) 2^(-2n)。"""
    return (2 * n + 1) * record_rate_symmetric(n)


# --- 小ドリフト -------------------------------------------------------------------

def p_plus_minus(n, params: DriftParams, sign: "Sign | str"):
    """
    ドリフト付きガウスウォークが n ステップ目に原点より上(+)/下(-)にいる確率。

    n は整数またはその配列を受け付ける。
    """
    sign = Sign.parse(sign)
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise ValueError("p_plus_minus needs n >= 1")
    x = np.sqrt(n_arr / 2.0) * params.ratio
    value = 0.5 * special.erfc(-sign.factor * x)
    return float(value) if value.ndim == 0 else value


def p_plus_minus_small_drift(n, params: DriftParams, sign: "Sign | str"):
    """線形化した符号確率 1/2 ± sqrt(n/2π) c/σ。"""
    sign = Sign.parse(sign)
    n_arr = np.asarray(n, dtype=float)
    value = 0.5 + sign.factor * np.sqrt(n_arr / (2.0 * math.pi)) * params.ratio
    return float(value) if value.ndim == 0 else value


def p_minus_large_drift(n, params: DriftParams):
    """大ドリフトでの p_-(n) ≈ σ (2π n c²)^(-1/2) exp(-c² n / 2σ²)。"""
    _require_positive_drift(params)
    n_arr = np.asarray(n, dtype=float)
    r = params.ratio
    value = np.exp(-0.5 * r * r * n_arr) / (r * np.sqrt(2.0 * math.pi * n_arr))
    return float(value) if value.ndim == 0 else value


def survival_small_drift(n: int, params: DriftParams, sign: "Sign | str") -> float:
    """
    小ドリフトの生存確率 q±(n) ≈ 1/sqrt(πn) ± c/(sqrt(2) σ)。

    有効領域は c/σ ≪ n^(-1/2)。領域外でも式の値をそのまま返す。
    """
    sign = Sign.parse(sign)
    return 1.0 / math.sqrt(math.pi * n) + sign.factor * params.ratio / SQRT2


def first_passage_small_drift(n: int, params: DriftParams, sign: "Sign | str") -> float:
    """小ドリフトの初通過確率 f±(n) ≈ n^(-3/2)/(2 sqrt(π)) ± c n^(-1/2)/(sqrt(2) π σ)。"""
    sign = Sign.parse(sign)
    return (n ** -1.5 / (2.0 * SQRT_PI)
            + sign.factor * params.ratio * n ** -0.5 / (SQRT2 * math.pi))


def mean_records_small_drift(n: int, params: DriftParams) -> float:
    """
    小ドリフトの平均記録数。

    対称項は漸近形 2 sqrt(n/π) の代わりに厳密値 mean_records_symmetric を使う。
    """
    correction = params.ratio * SQRT2 / math.pi * (n * math.atan(math.sqrt(n)) - math.sqrt(n))
    return mean_records_symmetric(n) + correction


def mean_records_linear_drift(n: int, params: DriftParams) -> float:
    """株価データとの比較に使う単純な参照線 m_n(0) + c n / (sqrt(2) σ)。"""
    return mean_records_symmetric(n) + params.ratio * n / SQRT2


def record_rate_small_drift(n: int, params: DriftParams, simplified: bool = False) -> float:
    """
    小ドリフトの記録率 P_n(c) ≈ 1/sqrt(πn) + (c/σ)(sqrt(2)/π) arctan(sqrt(n))。

    simplified=True のときは大きな n の形 1/sqrt(πn) + c/(sqrt(2) σ) を返す。
    """
    symmetric = 1.0 / math.sqrt(math.pi * n)
    if simplified:
        return symmetric + params.ratio / SQRT2
    return symmetric + params.ratio * SQRT2 / math.pi * math.atan(math.sqrt(n))


# --- 大ドリフトと漸近記録率 ---------------------------------------------------------

def survival_large_drift(n: int, params: DriftParams) -> float:
    """大ドリフトの負側生存確率 q_-(n) ≈ σ/(c sqrt(2π n³)) exp(-c² n / 2σ²)。"""
    _require_positive_drift(params)
    r = params.ratio
    return math.exp(-0.5 * r * r * n) / (r * math.sqrt(2.0 * math.pi * n ** 3))


def asymptotic_rate_large(ratio: float) -> float:
    """c/σ ≫ 1 での漸近記録率 1 - σ/(sqrt(2π) c) exp(-c²/2σ²)。"""
    return 1.0 - math.exp(-0.5 * ratio * ratio) / (SQRT_2PI * ratio)


def asymptotic_rate_small(ratio: float, constant: Optional[float] = None) -> float:
    """c/σ ≪ 1 での漸近記録率 (経験的係数) × c/σ。"""
    if constant is None:
        constant = get_settings().rate_constant
    return constant * ratio


@lru_cache(maxsize=None)
def asymptotic_rate_crossover(constant: Optional[float] = None) -> float:
    """
    二つの漸近枝を切り替える c/σ の閾値。

    係数 1.39 では二つの枝は交わらない(小ドリフト枝が常に上にある)。
    交わる場合は小さい方の交点、交わらない場合は両枝の差が最小になる点を使う。
    """
    if constant is None:
        constant = get_settings().rate_constant

    def gap(x: float) -> float:
        return asymptotic_rate_small(x, constant) - asymptotic_rate_large(x)

    closest = optimize.minimize_scalar(gap, bounds=(1e-3, 10.0), method="bounded")
    x_min = float(closest.x)
    if gap(x_min) < 0.0:
        threshold = float(optimize.brentq(gap, 1e-3, x_min))
        logger.info(f"Asymptotic rate branches intersect at c/sigma = {threshold:.6f}.")
    else:
        threshold = x_min
        logger.info(
            f"Asymptotic rate branches do not intersect; closest approach at "
            f"c/sigma = {threshold:.6f} (gap {gap(x_min):.4f})."
        )
    return threshold


def asymptotic_record_rate(params: DriftParams, constant: Optional[float] = None) -> float:
    """
    n → ∞ の記録率 P(c)。閾値より下では線形の小ドリフト枝、上では大ドリフト枝を使う。

    既定の係数では二つの枝が交わらないので、閾値 (係数 1.39 で c/σ ≈ 0.568) で値は不連続に跳ぶ
    (約 0.79 から約 0.40 へ)。滑らかな曲線が必要なら asymptotic_record_rate_exact を使う。
    """
    _require_positive_drift(params)
    if constant is None:
        constant = get_settings().rate_constant
    ratio = params.ratio
    if ratio < asymptotic_rate_crossover(constant):
        return asymptotic_rate_small(ratio, constant)
    return asymptotic_rate_large(ratio)


def asymptotic_record_rate_exact(params: DriftParams, tol: float = 1e-16,
                                 max_terms: int = 50_000_000) -> float:
    """
    P(c) = exp(-Σ_{n≥1} p_-(n)/n)。

    m̃(z) = 1/((1-z)² q̃_-(z)) の z → 1 の極限から従う。項は exp(-c² n / 2σ²) で
    減衰するので、項の大きさが tol を下回るまでブロック単位で和を取る。
    """
    _require_positive_drift(params)
    total = 0.0
    start = 1
    block = 4096
    while start <= max_terms:
        n = np.arange(start, start + block, dtype=float)
        terms = p_plus_minus(n, params, Sign.MINUS) / n
        total += math.fsum(terms)
        if terms[-1] < tol:
            break
        start += block
        block = min(block * 2, 1 << 22)
    else:
        logger.warning(f"Sum for the exact asymptotic rate truncated at {max_terms} terms.")
    return math.exp(-total)


def small_drift_rate_constant(c_over_sigma: float) -> float:
    """P(c)/(c/σ) を厳密な和から計算する。小さい c/σ で経験的係数と比べるのに使う。"""
    return asymptotic_record_rate_exact(DriftParams(c=c_over_sigma, sigma=1.0)) / c_over_sigma


def mean_records_large_drift(n: int, params: DriftParams) -> float:
    """大ドリフトの平均記録数 n (1 - σ/(sqrt(2π) c) exp(-c²/2σ²))。"""
    _require_positive_drift(params)
    return n * asymptotic_rate_large(params.ratio)


def crossover_time(params: DriftParams) -> float:
    """拡散からドリフト支配に移るステップのスケール n* ~ (σ/c)²。目安であって鋭い境界ではない。"""
    if params.c == 0:
        return math.inf
    return (params.sigma / params.c) ** 2


@dataclass(frozen=True)
class ScalingLimits:
    """スケーリング関数 g(x) の二つの漸近枝の値。"""
    small_x: float
    large_x: float


def scaling_function_limits(x: float, constant: Optional[float] = None) -> ScalingLimits:
    """
    P_n(c) = (c/σ) g((c/σ)² n) の漸近枝 g(x→0) ≈ 1/sqrt(πx) と g(x→∞) ≈ 係数。

    g は漸近的にしか分からないので、枝の間の連続性は仮定しない。
    """
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    if constant is None:
        constant = get_settings().rate_constant
    return ScalingLimits(small_x=1.0 / math.sqrt(math.pi * x), large_x=constant)
