import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecordTally:
    """1本の系列に対する上側・下側記録の集計結果。

    Attributes:
        upper_times (Tuple[int, ...]): 上側記録が起きたステップ番号(昇順)。
        lower_times (Tuple[int, ...]): 下側記録が起きたステップ番号(昇順)。
        upper_counts (np.ndarray): 各ステップまでの上側記録の累積数 m_n。
        lower_counts (np.ndarray): 各ステップまでの下側記録の累積数。
    """
    upper_times: Tuple[int, ...]
    lower_times: Tuple[int, ...]
    upper_counts: np.ndarray
    lower_counts: np.ndarray

    def __len__(self) -> int:
        return len(self.upper_counts)

    @property
    def upper_mask(self) -> np.ndarray:
        """各ステップが上側記録かどうか。"""
        return np.diff(self.upper_counts, prepend=0) > 0

    @property
    def lower_mask(self) -> np.ndarray:
        """各ステップが下側記録かどうか。"""
        return np.diff(self.lower_counts, prepend=0) > 0


def upper_record_mask(values: np.ndarray, axis: int = -1,
                      initial: Optional[np.ndarray] = None) -> np.ndarray:
    """
    軸に沿った厳密な上側記録の指示関数を返す。

    値がそれ以前のすべての値より厳密に大きいときだけ記録とする(同値は記録ではない)。
    `initial` を与えた場合は、その値をそれまでの最大値とみなして続きから判定する。
    与えない場合は先頭要素が記録になる。
    """
    values = np.asarray(values, dtype=float)
    values = np.moveaxis(values, axis, -1)
    running = np.maximum.accumulate(values, axis=-1)
    previous = np.empty_like(values)
    previous[..., 1:] = running[..., :-1]
    if initial is None:
        previous[..., 0] = -np.inf
    else:
        initial = np.asarray(initial, dtype=float)
        previous[..., 0] = initial
        previous[..., 1:] = np.maximum(previous[..., 1:], initial[..., None])
    mask = values > previous
    return np.moveaxis(mask, -1, axis)


def record_counts_matrix(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """行ごとの系列について、上側・下側記録の累積数を返す。"""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    upper = np.cumsum(upper_record_mask(values, axis=1), axis=1)
    lower = np.cumsum(upper_record_mask(-values, axis=1), axis=1)
    return upper, lower


def count_records(series: Sequence[float]) -> RecordTally:
    """
    実数列の上側・下側記録を数える。

    Raises:
        ValueError: 系列が空の場合、または有限でない値を含む場合。
    """
    values = np.asarray(series, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empty series")
    finite = np.isfinite(values)
    if not finite.all():
        index = int(np.argmin(finite))
        raise ValueError(f"non-finite value {values[index]!r} at index {index}")

    upper = upper_record_mask(values)
    lower = upper_record_mask(-values)
    return RecordTally(
        upper_times=tuple(int(i) for i in np.flatnonzero(upper)),
        lower_times=tuple(int(i) for i in np.flatnonzero(lower)),
        upper_counts=np.cumsum(upper),
        lower_counts=np.cumsum(lower),
    )


def record_rate_profile(tallies: List[RecordTally],
                        n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    各ステップで記録を持つ系列の割合を、上側と下側それぞれについて返す。

    Returns:
        Tuple[np.ndarray, np.ndarray]: 長さ n_max+1 の上側・下側記録率。
    """
    if not tallies:
        raise ValueError("record_rate_profile needs at least one tally")
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative, got {n_max}")
    short = [i for i, tally in enumerate(tallies) if len(tally) < n_max + 1]
    if short:
        raise ValueError(
            f"{len(short)} tallies cover fewer than {n_max + 1} steps "
            f"(first: index {short[0]}, length {len(tallies[short[0]])})"
        )

    upper = np.zeros(n_max + 1, dtype=np.int64)
    lower = np.zeros(n_max + 1, dtype=np.int64)
    for tally in tallies:
        upper += tally.upper_mask[:n_max + 1]
        lower += tally.lower_mask[:n_max + 1]
    total = len(tallies)
    logger.debug(f"Record rate profile over {total} tallies up to step {n_max}.")
    return upper / total, lower / total
