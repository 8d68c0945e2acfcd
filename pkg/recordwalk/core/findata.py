"""
株価終値の記録統計パイプライン。

対数株価に線形トレンドを当てはめて取り除き、銘柄ごとのドリフト c_i と増分の
標準偏差 sigma_i を推定し、トレンド除去前後の上側・下側記録を数える。
長い系列を重ならない窓に分けて窓ごとにトレンドを除く解析も行う。
ステップ番号は取引日の番号で、週末や祝日の暦上の空白は無視する。
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .analytic import record_rate_symmetric_table
from .records import record_counts_matrix

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "ticker", "close")
DEFAULT_MIN_LENGTH = 3
DEGENERATE_TOL = 1e-12
SYNTHETIC_START = "1990-01-02"


class PriceDataError(ValueError):
    """入力の株価ファイルが仕様に合わないときの例外"""


class SigmaMode(Enum):
    """増分の標準偏差の取り方"""
    DETRENDED = "detrended"
    RAW = "raw"


@dataclass(frozen=True)
class PriceSeries:
    """1銘柄の日次終値。

    Attributes:
        ticker (str): 銘柄コード。
        dates (np.ndarray): 狭義単調増加の日付 (datetime64[D])。
        closes (np.ndarray): 正の終値。dates と同じ長さ。
    """
    ticker: str
    dates: np.ndarray
    closes: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        closes = np.asarray(self.closes, dtype=float)
        if not self.ticker:
            raise ValueError("ticker must be a non-empty string")
        if dates.shape != closes.shape or dates.ndim != 1:
            raise ValueError(f"{self.ticker}: dates and closes must be 1-D and of equal length")
        if closes.size < 2:
            raise ValueError(f"{self.ticker}: a price series needs at least 2 rows")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValueError(f"{self.ticker}: dates must be strictly increasing")
        if not np.all(closes > 0):
            bad = int(np.argmin(closes > 0))
            raise ValueError(f"{self.ticker}: non-positive close {closes[bad]} on {dates[bad]}")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "closes", closes)

    def __len__(self) -> int:
        return self.closes.size


@dataclass(frozen=True)
class DetrendFit:
    """対数株価への線形トレンドの当てはめ結果。

    Attributes:
        c_hat (float): 1取引日あたりのドリフト(傾き)。
        sigma_hat (float): 日次増分の標準偏差。
        intercept (float): 切片。
        residuals (np.ndarray): トレンドを除いた対数株価。
    """
    c_hat: float
    sigma_hat: float
    intercept: float
    residuals: np.ndarray

    @property
    def degenerate(self) -> bool:
        return not self.sigma_hat > 0

    @property
    def c_over_sigma(self) -> float:
        return self.c_hat / self.sigma_hat if not self.degenerate else math.nan


@dataclass(frozen=True)
class EnsembleRecordReport:
    """銘柄(あるいは窓)について平均したステップごとの記録数。

    Attributes:
        mean_upper (np.ndarray): 上側記録数の平均 (長さ horizon)。
        mean_lower (np.ndarray): 下側記録数の平均。
        n_series (int): 平均に使った系列の数。
        horizon (int): 系列の長さ(ステップ 0..horizon-1)。
    """
    mean_upper: np.ndarray
    mean_lower: np.ndarray
    n_series: int
    horizon: int

    def to_frame(self, label: Optional[str] = None) -> pd.DataFrame:
        n = np.arange(self.horizon)
        frame = pd.DataFrame({
            "n": n,
            "mean_upper": self.mean_upper,
            "mean_lower": self.mean_lower,
            "symmetric_reference": (2 * n + 1) * record_rate_symmetric_table(self.horizon - 1),
        })
        if label is not None:
            frame.insert(0, "series", label)
        return frame


def _parse_error(line: int, message: str) -> PriceDataError:
    return PriceDataError(f"line {line}: {message}")


def load_prices(source, min_length: int = DEFAULT_MIN_LENGTH) -> List[PriceSeries]:
    """
    CSV (date, ticker, close) を読み込み、銘柄ごとの PriceSeries を返す。

    行の順序は問わない。行数が min_length に満たない銘柄は警告を出して捨てる。

    Raises:
        PriceDataError: 形式の誤った行、正でない終値、(ticker, date) の重複。
        FileNotFoundError: ファイルが存在しない場合。
    """
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, skip_blank_lines=False,
                            encoding="utf-8").fillna("")
    except pd.errors.ParserError as e:
        raise PriceDataError(f"malformed CSV: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise PriceDataError("empty input file") from e

    frame.columns = [str(column).strip() for column in frame.columns]
    missing = [column for column in REQUIRED_COLUMNS if column not in frame.columns]
    if missing:
        raise PriceDataError(f"missing required column(s) {missing}; got {list(frame.columns)}")

    # ヘッダが 1 行目なので、データ行 i はファイルの i+2 行目。空行は番号を振ってから捨てる
    lines = frame.index.to_numpy() + 2
    blank = np.logical_and.reduce([frame[column].str.strip() == "" for column in REQUIRED_COLUMNS])
    frame = frame.loc[~blank].reset_index(drop=True)
    lines = lines[~blank]
    tickers = frame["ticker"].str.strip()
    dates = pd.to_datetime(frame["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    closes = pd.to_numeric(frame["close"].str.strip(), errors="coerce")

    for mask, what in ((tickers == "", "empty ticker"),
                       (dates.isna(), "date is not ISO-8601 YYYY-MM-DD"),
                       (closes.isna() | ~np.isfinite(closes), "close is not a number")):
        if mask.any():
            i = int(np.argmax(mask.to_numpy()))
            raise _parse_error(int(lines[i]), f"{what}: {frame.iloc[i].to_dict()}")

    non_positive = (closes <= 0).to_numpy()
    if non_positive.any():
        i = int(np.argmax(non_positive))
        raise _parse_error(
            int(lines[i]),
            f"non-positive close {closes.iloc[i]} for ticker {tickers.iloc[i]} "
            f"on {dates.iloc[i].date().isoformat()}",
        )

    clean = pd.DataFrame({"ticker": tickers, "date": dates, "close": closes, "line": lines})
    duplicated = clean.duplicated(["ticker", "date"], keep="first").to_numpy()
    if duplicated.any():
        i = int(np.argmax(duplicated))
        row = clean.iloc[i]
        raise _parse_error(
            int(row["line"]),
            f"duplicate row for ticker {row['ticker']} on {row['date'].date().isoformat()}",
        )

    series: List[PriceSeries] = []
    for ticker, rows in clean.sort_values(["ticker", "date"]).groupby("ticker", sort=True):
        if len(rows) < max(min_length, 2):
            logger.warning(
                f"Dropping ticker '{ticker}': {len(rows)} row(s) < minimum {max(min_length, 2)}."
            )
            continue
        series.append(PriceSeries(
            ticker=str(ticker),
            dates=rows["date"].to_numpy().astype("datetime64[D]"),
            closes=rows["close"].to_numpy(dtype=float),
        ))
    logger.info(f"Loaded {len(series)} ticker(s) from {source}.")
    return series


def write_prices_csv(series: Sequence[PriceSeries], path) -> None:
    """PriceSeries を入力と同じ CSV 形式で書き出す。"""
    frames = [
        pd.DataFrame({
            "date": pd.to_datetime(s.dates).strftime("%Y-%m-%d"),
            "ticker": s.ticker,
            "close": s.closes,
        })
        for s in series
    ]
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, encoding="utf-8")
    logger.info(f"Wrote {len(series)} ticker(s) to {path}.")


def log_transform(prices: PriceSeries) -> np.ndarray:
    """終値の自然対数。"""
    return np.log(prices.closes)


def _fit_rows(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # 行ごとの最小二乗直線 (取引日番号 0..L-1 に対して)。中心化した閉形式で解く
    length = values.shape[-1]
    x = np.arange(length, dtype=float)
    x_centered = x - x.mean()
    y_mean = values.mean(axis=-1, keepdims=True)
    slope = np.asarray((values - y_mean) @ x_centered / (x_centered @ x_centered))
    residuals = values - y_mean - slope[..., None] * x_centered
    intercept = y_mean[..., 0] - slope * x.mean()
    return slope, intercept, residuals


def _increment_sigma(logp: np.ndarray, residuals: np.ndarray, mode: SigmaMode) -> np.ndarray:
    if mode is SigmaMode.RAW:
        increments = np.diff(logp, axis=-1)
        return np.sqrt(np.mean(increments * increments, axis=-1))
    return np.std(np.diff(residuals, axis=-1), axis=-1, ddof=1)


def fit_linear_trend(logp: Sequence[float],
                     sigma_mode: "SigmaMode | str" = SigmaMode.DETRENDED) -> DetrendFit:
    """
    取引日番号に対する対数株価の最小二乗直線を当てはめる。

    sigma_mode が detrended なら残差の一階差分の標本標準偏差 (ddof=1)、raw なら
    生の対数増分の 0 まわりの二乗平均平方根を sigma_hat とする。中心化した生の
    増分の標準偏差は残差増分のものと恒等的に等しいので、raw はドリフト分を含む値になる。

    Raises:
        ValueError: 長さが 3 未満の場合。
    """
    mode = SigmaMode(sigma_mode)
    values = np.asarray(logp, dtype=float).ravel()
    if values.size < 3:
        raise ValueError(f"fit_linear_trend needs at least 3 points, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ValueError("fit_linear_trend needs finite values")
    slope, intercept, residuals = _fit_rows(values)
    sigma = float(_increment_sigma(values, residuals, mode))
    if sigma <= DEGENERATE_TOL * max(1.0, float(np.max(np.abs(values)))):
        # 直線そのものの入力では丸め誤差だけが残る
        sigma = 0.0
    fit = DetrendFit(c_hat=float(slope), sigma_hat=sigma,
                     intercept=float(intercept), residuals=residuals)
    if fit.degenerate:
        logger.warning("Degenerate trend fit: increments have zero spread.")
    return fit


def _common_horizon(series: Sequence[PriceSeries]) -> int:
    if not series:
        raise ValueError("at least one price series is required")
    lengths = {len(s) for s in series}
    horizon = min(lengths)
    if len(lengths) > 1:
        logger.warning(
            f"Series lengths differ ({min(lengths)}..{max(lengths)}); "
            f"truncating all to the common horizon {horizon}."
        )
    return horizon


def _report(values: np.ndarray) -> EnsembleRecordReport:
    upper, lower = record_counts_matrix(values)
    return EnsembleRecordReport(
        mean_upper=upper.mean(axis=0),
        mean_lower=lower.mean(axis=0),
        n_series=values.shape[0],
        horizon=values.shape[1],
    )


@dataclass(frozen=True)
class RecordReports:
    """トレンド除去前後の記録数レポート。"""
    raw: EnsembleRecordReport
    detrended: EnsembleRecordReport


def _log_matrix(series: Sequence[PriceSeries], horizon: int) -> np.ndarray:
    return np.vstack([log_transform(s)[:horizon] for s in series])


def detrended_record_counts(series: Sequence[PriceSeries]) -> RecordReports:
    """
    各銘柄の対数株価そのものと、線形トレンドを除いた残差について記録を数え、
    銘柄平均を返す。長さが異なる場合は最短の長さに揃える。
    """
    horizon = _common_horizon(series)
    if horizon < 3:
        raise ValueError(f"detrending needs series of length >= 3, got {horizon}")
    logp = _log_matrix(series, horizon)
    _, _, residuals = _fit_rows(logp)
    logger.info(f"Counting records for {len(series)} ticker(s) over {horizon} steps.")
    return RecordReports(raw=_report(logp), detrended=_report(residuals))


def fit_all(series: Sequence[PriceSeries],
            sigma_mode: "SigmaMode | str" = SigmaMode.DETRENDED) -> List[DetrendFit]:
    return [fit_linear_trend(log_transform(s), sigma_mode) for s in series]


def normalized_drift_average(fits: Sequence[DetrendFit]) -> float:
    """退化していない当てはめについての c_hat/sigma_hat の算術平均。"""
    ratios = [fit.c_over_sigma for fit in fits if not fit.degenerate]
    if not ratios:
        raise ValueError("no non-degenerate fits to average")
    skipped = len(fits) - len(ratios)
    if skipped:
        logger.warning(f"Skipped {skipped} degenerate fit(s) in the drift average.")
    return float(np.mean(ratios))


def drift_summary(series: Sequence[PriceSeries],
                  sigma_mode: "SigmaMode | str" = SigmaMode.DETRENDED) -> Tuple[pd.DataFrame, float, float]:
    """
    銘柄ごとの (c_hat, sigma_hat, c/sigma) 表と、c/sigma の平均およびその標準誤差。
    """
    fits = fit_all(series, sigma_mode)
    table = pd.DataFrame({
        "ticker": [s.ticker for s in series],
        "n": [len(s) for s in series],
        "c_hat": [f.c_hat for f in fits],
        "sigma_hat": [f.sigma_hat for f in fits],
        "c_over_sigma": [f.c_over_sigma for f in fits],
        "degenerate": [f.degenerate for f in fits],
    })
    mean = normalized_drift_average(fits)
    ratios = table.loc[~table["degenerate"], "c_over_sigma"].to_numpy()
    error = float(np.std(ratios, ddof=1) / math.sqrt(ratios.size)) if ratios.size > 1 else 0.0
    return table, mean, error


def windowed_analysis(series: Sequence[PriceSeries], window_len: int) -> EnsembleRecordReport:
    """
    各対数系列を長さ window_len の重ならない連続した窓に左から分け(端数は捨てる)、
    窓ごとにトレンドを除いて記録を数え、全銘柄の全窓について平均する。
    窓の先頭はステップ 0 で、記録として数える。
    """
    if window_len < 3:
        raise ValueError(f"window_len must be >= 3, got {window_len}")
    if not series:
        raise ValueError("at least one price series is required")
    windows = []
    for s in series:
        if len(s) < window_len:
            raise ValueError(
                f"window_len {window_len} exceeds the length {len(s)} of ticker '{s.ticker}'"
            )
        logp = log_transform(s)
        count = len(s) // window_len
        windows.append(logp[:count * window_len].reshape(count, window_len))
    stacked = np.vstack(windows)
    _, _, residuals = _fit_rows(stacked)
    logger.info(f"Windowed analysis: {stacked.shape[0]} window(s) of length {window_len}.")
    return _report(residuals)


def generate_synthetic_prices(n_tickers: int, n_steps: int, mean_c_over_sigma: float,
                              seed: int, spread: float = 0.5,
                              sigma_range: Tuple[float, float] = (0.01, 0.03),
                              start: str = SYNTHETIC_START,
                              initial_price: float = 100.0) -> List[PriceSeries]:
    """
    幾何ガウスウォークの合成データ。

    銘柄 i の日次対数増分は N(c_i, sigma_i²)。sigma_i は sigma_range から一様に、
    c_i/sigma_i は平均 mean_c_over_sigma、標準偏差 spread·|mean_c_over_sigma| の正規分布から
    引き、標本平均がちょうど mean_c_over_sigma になるよう中心を合わせる。
    日付は start から始まる営業日。
    """
    if n_tickers < 1 or n_steps < 2:
        raise ValueError(f"need n_tickers >= 1 and n_steps >= 2, got {n_tickers}, {n_steps}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sigmas = rng.uniform(*sigma_range, size=n_tickers)
    ratios = rng.normal(mean_c_over_sigma, spread * abs(mean_c_over_sigma), size=n_tickers)
    ratios += mean_c_over_sigma - ratios.mean()
    increments = rng.standard_normal((n_tickers, n_steps - 1)) * sigmas[:, None]
    increments += (ratios * sigmas)[:, None]
    logp = np.zeros((n_tickers, n_steps))
    logp[:, 1:] = np.cumsum(increments, axis=1)
    dates = pd.bdate_range(start=start, periods=n_steps).to_numpy().astype("datetime64[D]")
    width = len(str(n_tickers - 1))
    logger.info(
        f"Generated {n_tickers} synthetic ticker(s) x {n_steps} steps "
        f"with <c/sigma> = {mean_c_over_sigma}."
    )
    return [
        PriceSeries(ticker=f"SYN{i:0{width}d}", dates=dates,
                    closes=initial_price * np.exp(logp[i]))
        for i in range(n_tickers)
    ]
