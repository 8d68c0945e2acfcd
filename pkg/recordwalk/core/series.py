"""
打ち切り冪級数による母関数エンジン。

Sparre Andersen の恒等式 q̃±(z) = exp(Σ p±(n) z^n / n) から生存確率・初通過確率・
記録数分布・平均記録数を打ち切り次数 N まで厳密に計算する。リポジトリ全体の
基準値(オラクル)として使う。係数は倍精度で持ち、畳み込みの丸め誤差は係数あたり
N·eps 程度。
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Sequence

import numpy as np

from . import analytic
from .analytic import DriftParams, Sign
from .config import DEFAULT_ORDER

logger = logging.getLogger(__name__)

# 非可逆とみなす定数項の閾値
INVERTIBILITY_TOL = 1e-30
# 一様分布の符号確率を有理数演算で厳密に計算する最大ステップ数
IRWIN_HALL_EXACT_MAX = 40


class JumpFamily(Enum):
    """ジャンプ分布の族"""
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class PowerSeries:
    """係数 a_0..a_N を持つ打ち切り冪級数。

    Attributes:
        coeffs (np.ndarray): 係数列。長さは order + 1。
    """
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).ravel()
        if coeffs.size == 0:
            raise ValueError("a power series needs at least one coefficient")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def __len__(self) -> int:
        return self.coeffs.size

    def __getitem__(self, index):
        return self.coeffs[index]

    def truncate(self, order: int) -> "PowerSeries":
        return PowerSeries(self.coeffs[:order + 1])

    @classmethod
    def identity(cls, order: int) -> "PowerSeries":
        coeffs = np.zeros(order + 1)
        coeffs[0] = 1.0
        return cls(coeffs)

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], order: int) -> "PowerSeries":
        """多項式を次数 order まで零で埋めて(あるいは切り詰めて)級数にする。"""
        padded = np.zeros(order + 1)
        values = np.asarray(coeffs, dtype=float)[:order + 1]
        padded[:values.size] = values
        return cls(padded)


def series_mul(a: PowerSeries, b: PowerSeries) -> PowerSeries:
    """コーシー積。結果の次数は二つの次数の小さい方。"""
    order = min(a.order, b.order)
    return PowerSeries(np.convolve(a.coeffs[:order + 1], b.coeffs[:order + 1])[:order + 1])


def series_inv(a: PowerSeries) -> PowerSeries:
    """
    逆数級数 1/a。

    Raises:
        ValueError: 定数項がほぼ 0 の場合 ("non-invertible series")。
    """
    a0 = a.coeffs[0]
    if abs(a0) <= INVERTIBILITY_TOL:
        raise ValueError("non-invertible series")
    order = a.order
    b = np.zeros(order + 1)
    b[0] = 1.0 / a0
    tail = a.coeffs[1:]
    for k in range(1, order + 1):
        # b_k = -(1/a_0) Σ_{j=1..k} a_j b_{k-j}
        b[k] = -np.dot(tail[:k], b[k - 1::-1]) / a0
    return PowerSeries(b)


def series_exp(a: PowerSeries) -> PowerSeries:
    """
    定数項 0 の級数の指数関数。漸化式 J b_J = Σ_{k=1..J} k a_k b_{J-k}, b_0 = 1。O(N²)。
    """
    if a.coeffs[0] != 0.0:
        raise ValueError(f"series_exp needs a zero constant term, got {a.coeffs[0]}")
    order = a.order
    weighted = np.arange(order + 1) * a.coeffs
    b = np.zeros(order + 1)
    b[0] = 1.0
    for j in range(1, order + 1):
        b[j] = np.dot(weighted[1:j + 1], b[j - 1::-1]) / j
    return PowerSeries(b)


def sparre_andersen_survival(p: Sequence[float]) -> PowerSeries:
    """
    符号確率 p(1..N) から生存確率の母関数 q̃(z) = exp(Σ p(n) z^n / n) を作る。

    Raises:
        ValueError: p が [0, 1] の外にある場合。
    """
    p = np.asarray(p, dtype=float).ravel()
    bad = np.flatnonzero(~((p >= 0.0) & (p <= 1.0)))
    if bad.size:
        raise ValueError(f"sign probability p({bad[0] + 1}) = {p[bad[0]]} lies outside [0, 1]")
    inner = np.zeros(p.size + 1)
    inner[1:] = p / np.arange(1, p.size + 1)
    return series_exp(PowerSeries(inner))


def gaussian_sign_probabilities(params: DriftParams, sign: "Sign | str", N: int) -> np.ndarray:
    """ガウスジャンプの p±(n), n = 1..N。"""
    if N < 1:
        return np.zeros(0)
    return np.atleast_1d(analytic.p_plus_minus(np.arange(1, N + 1), params, sign))


def _irwin_hall_cdf(x: Fraction, n: int) -> Fraction:
    # [0,1] 一様乱数 n 個の和の分布関数
    if x <= 0:
        return Fraction(0)
    if x >= n:
        return Fraction(1)
    total = Fraction(0)
    for k in range(int(math.floor(x)) + 1):
        total += (-1) ** k * math.comb(n, k) * (x - k) ** n
    return total / math.factorial(n)


def uniform_sign_probabilities(params: DriftParams, sign: "Sign | str", N: int) -> np.ndarray:
    """
    標準偏差 σ の一様ジャンプ(半幅 sqrt(3) σ)にドリフト c を加えたウォークの p±(n)。

    n ≤ IRWIN_HALL_EXACT_MAX では Irwin–Hall 分布の和を有理数で厳密に評価し、
    それより先は中心極限定理によりガウスの式で近似する。
    """
    sign = Sign.parse(sign)
    if N < 1:
        return np.zeros(0)
    half_width = math.sqrt(3.0) * params.sigma
    minus = np.empty(N)
    exact = min(N, IRWIN_HALL_EXACT_MAX)
    for n in range(1, exact + 1):
        # X_n < 0  <=>  Σ V_i < n/2 - n c / (2 a),  V_i ~ U[0, 1]
        threshold = Fraction(n, 2) - Fraction(n) * Fraction(params.c) / (2 * Fraction(half_width))
        minus[n - 1] = float(_irwin_hall_cdf(threshold, n))
    if N > exact:
        n = np.arange(exact + 1, N + 1)
        minus[exact:] = analytic.p_plus_minus(n, params, Sign.MINUS)
    return minus if sign is Sign.MINUS else 1.0 - minus


def sign_probabilities(params: DriftParams, sign: "Sign | str", N: int,
                       family: JumpFamily = JumpFamily.GAUSSIAN) -> np.ndarray:
    if JumpFamily(family) is JumpFamily.UNIFORM:
        return uniform_sign_probabilities(params, sign, N)
    return gaussian_sign_probabilities(params, sign, N)


def first_passage_from_survival(q: PowerSeries) -> PowerSeries:
    """f(0) = 0, f(n) = q(n-1) - q(n)。"""
    if not math.isclose(q.coeffs[0], 1.0, abs_tol=1e-12):
        raise ValueError(f"survival series must start at 1, got {q.coeffs[0]}")
    f = np.zeros_like(q.coeffs)
    f[1:] = q.coeffs[:-1] - q.coeffs[1:]
    return PowerSeries(f)


def record_number_distributions(f_minus: PowerSeries, q_minus: PowerSeries,
                                m_max: int) -> np.ndarray:
    """
    Π(m, n) を m = 1..m_max について行列で返す(行 m-1, 列 n)。

    f̃_-^(m-1) q̃_- を m ごとに f̃_- を一回掛けて更新する。
    """
    if m_max < 1:
        raise ValueError(f"m_max must be >= 1, got {m_max}")
    order = min(f_minus.order, q_minus.order)
    table = np.zeros((m_max, order + 1))
    current = q_minus.truncate(order)
    for m in range(1, m_max + 1):
        table[m - 1] = current.coeffs
        if m < m_max:
            current = series_mul(current, f_minus)
    return table


def record_number_distribution(f_minus: PowerSeries, q_minus: PowerSeries, m: int) -> PowerSeries:
    """Σ_n Π(m, n) z^n = f̃_-^(m-1)(z) q̃_-(z)。"""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return PowerSeries(record_number_distributions(f_minus, q_minus, m)[m - 1])


def mean_record_series(q_minus: PowerSeries) -> PowerSeries:
    """平均記録数の母関数 m̃(z) = 1/((1-z)² q̃_-(z))。"""
    one_minus_z_sq = PowerSeries.polynomial([1.0, -2.0, 1.0], q_minus.order)
    return series_inv(series_mul(one_minus_z_sq, q_minus))


def record_rate_from_mean(m_series: PowerSeries) -> PowerSeries:
    """P_0 = 1, P_n = m_n - m_{n-1}。"""
    rate = np.empty_like(m_series.coeffs)
    rate[0] = 1.0
    rate[1:] = np.diff(m_series.coeffs)
    return PowerSeries(rate)


@dataclass(frozen=True)
class RecordSeries:
    """あるドリフトについての生存・初通過・平均記録数・記録率の級数一式。"""
    params: DriftParams
    family: JumpFamily
    q_plus: PowerSeries
    q_minus: PowerSeries
    f_plus: PowerSeries
    f_minus: PowerSeries
    mean_records: PowerSeries
    record_rate: PowerSeries

    @property
    def order(self) -> int:
        return self.q_minus.order

    @classmethod
    def from_params(cls, params: DriftParams, order: int = DEFAULT_ORDER,
                    family: JumpFamily = JumpFamily.GAUSSIAN) -> "RecordSeries":
        if order < 0:
            raise ValueError(f"order must be non-negative, got {order}")
        family = JumpFamily(family)
        logger.info(f"Computing record series for c={params.c}, sigma={params.sigma}, "
                    f"family={family.value}, order={order}")
        q_plus = sparre_andersen_survival(sign_probabilities(params, Sign.PLUS, order, family))
        q_minus = sparre_andersen_survival(sign_probabilities(params, Sign.MINUS, order, family))
        mean = mean_record_series(q_minus)
        return cls(
            params=params,
            family=family,
            q_plus=q_plus,
            q_minus=q_minus,
            f_plus=first_passage_from_survival(q_plus),
            f_minus=first_passage_from_survival(q_minus),
            mean_records=mean,
            record_rate=record_rate_from_mean(mean),
        )

    def pi(self, m: int) -> PowerSeries:
        return record_number_distribution(self.f_minus, self.q_minus, m)


def validate_pi_symmetric_variants(n_max: int = 20) -> Dict[str, float]:
    """
    対称記録数分布の各読み方を級数オラクル(p ≡ 1/2)と照合し、最大絶対誤差を返す。
    """
    q = sparre_andersen_survival(np.full(n_max, 0.5))
    f = first_passage_from_survival(q)
    oracle = record_number_distributions(f, q, n_max + 1)
    deviations = {}
    for name in analytic.PI_SYMMETRIC_VARIANTS:
        worst = 0.0
        for n in range(n_max + 1):
            for m in range(1, n + 2):
                value = analytic.pi_symmetric(m, n, variant=name)
                worst = max(worst, abs(value - oracle[m - 1, n]))
        deviations[name] = worst
    logger.info(f"Symmetric record-number variants vs series oracle (n <= {n_max}): {deviations}")
    return deviations


def resolve_pi_symmetric_variant(n_max: int = 20, tol: float = 1e-12) -> str:
    """級数オラクルと tol 以内で一致する読み方の名前を返す。"""
    deviations = validate_pi_symmetric_variants(n_max)
    matching = [name for name, worst in deviations.items() if worst <= tol]
    if not matching:
        raise ValueError(f"no variant matches the series oracle within {tol}: {deviations}")
    return matching[0]
