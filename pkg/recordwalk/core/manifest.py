import hashlib
import json
import logging
import math
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional, TextIO

import numpy as np
import pandas as pd

from .. import __version__

logger = logging.getLogger(__name__)

MANIFEST_PREFIX = "# manifest: "


def generate_run_id() -> str:
    """SHA224に基づくユニークな8文字のIDを生成する。"""
    unique_id = uuid.uuid4()
    hash_object = hashlib.sha224(str(unique_id).encode())
    return hash_object.hexdigest()[:8]


def utc_timestamp() -> str:
    """ISO 8601形式のUTCタイムスタンプを返す。"""
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """1回の実行を再現するための情報。

    Attributes:
        subcommand (str): サブコマンド名。
        parameters (Dict[str, Any]): 既定値を含む解決済みパラメータ。
        seed (int | None): シード(乱数を使わないコマンドでは None)。
        version (str): ツールのバージョン。
        started_at (str): 開始時刻 (UTC)。
        finished_at (str | None): 終了時刻 (UTC)。
        run_id (str): 実行ごとの ID。
        summary (Dict[str, Any]): コマンドが返した要約値。
    """
    subcommand: str
    parameters: Dict[str, Any]
    seed: Optional[int] = None
    version: str = __version__
    started_at: str = field(default_factory=utc_timestamp)
    finished_at: Optional[str] = None
    run_id: str = field(default_factory=generate_run_id)
    summary: Dict[str, Any] = field(default_factory=dict)

    def finish(self):
        self.finished_at = utc_timestamp()

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable(asdict(self))


def _jsonable(value: Any) -> Any:
    # numpy のスカラーや配列、Enum を JSON に載せられる形に直す
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "value") and hasattr(type(value), "__members__"):
        return value.value
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def write_table(table: pd.DataFrame, manifest: RunManifest, stream: TextIO,
                as_json: bool = False):
    """
    表をマニフェスト付きで書き出す。

    CSV では先頭行に `# manifest: {...}` を置き、JSON では
    {"manifest": ..., "rows": [...]} の形にする。
    """
    if as_json:
        payload = {
            "manifest": manifest.to_dict(),
            "rows": _jsonable(table.to_dict(orient="records")),
        }
        json.dump(payload, stream, ensure_ascii=False, indent=2)
        stream.write("\n")
    else:
        stream.write(MANIFEST_PREFIX + json.dumps(manifest.to_dict(), ensure_ascii=False) + "\n")
        table.to_csv(stream, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(table)} row(s) for '{manifest.subcommand}' (run {manifest.run_id}).")


def read_table(stream: TextIO) -> tuple[Dict[str, Any], pd.DataFrame]:
    """write_table が書いた CSV を読み戻す。"""
    first = stream.readline()
    if not first.startswith(MANIFEST_PREFIX):
        raise ValueError("missing '# manifest:' preamble")
    manifest = json.loads(first[len(MANIFEST_PREFIX):])
    return manifest, pd.read_csv(stream)
