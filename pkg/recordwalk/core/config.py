import logging
import os
from dataclasses import dataclass
from functools import lru_cache

from dotenv import load_dotenv

# .envファイルから環境変数を読み込む
load_dotenv()
logger = logging.getLogger(__name__)

DEFAULT_ORDER = 5000
DEFAULT_REALIZATIONS = 10**6
DEFAULT_SEED = 42
DEFAULT_RATE_CONSTANT = 1.39


@dataclass(frozen=True)
class Settings:
    """環境変数から読み込まれる実行時設定。

    Attributes:
        threads (int): モンテカルロのワーカー数の上限 (RECORD_WALK_THREADS)。
        rate_constant (float): 小ドリフト極限の漸近記録率の係数
            (RECORD_WALK_RATE_CONSTANT)。
        log_level (str): ルートロガーのレベル (RECORD_WALK_LOG_LEVEL)。
    """
    threads: int
    rate_constant: float = DEFAULT_RATE_CONSTANT
    log_level: str = "INFO"


def _read_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"Environment variable '{name}' must be an integer, got {raw!r}.")
    if value < 1:
        raise ValueError(f"Environment variable '{name}' must be >= 1, got {value}.")
    return value


def _read_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"Environment variable '{name}' must be a number, got {raw!r}.")
    if not value > 0:
        raise ValueError(f"Environment variable '{name}' must be positive, got {value}.")
    return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """環境変数から Settings を構築する(プロセス内でキャッシュされる)。"""
    settings = Settings(
        threads=_read_int("RECORD_WALK_THREADS", os.cpu_count() or 1),
        rate_constant=_read_float("RECORD_WALK_RATE_CONSTANT", DEFAULT_RATE_CONSTANT),
        log_level=os.environ.get("RECORD_WALK_LOG_LEVEL", "INFO").upper(),
    )
    logger.debug(f"Settings loaded: {settings}")
    return settings
