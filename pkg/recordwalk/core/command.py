import argparse
import importlib
import inspect
import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Type

import pandas as pd

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """引数の組み合わせが不正なときの例外。CLI は終了コード 2 で終わる。"""


@dataclass
class CommandResult:
    """サブコマンドの実行結果。

    Attributes:
        table (pd.DataFrame): 出力する表。
        parameters (Dict[str, Any]): 既定値を含めて解決済みのパラメータ。
        seed (int | None): 乱数を使うコマンドのシード。
        summary (Dict[str, Any]): マニフェストに埋め込む要約値。
    """
    table: pd.DataFrame
    parameters: Dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    summary: Dict[str, Any] = field(default_factory=dict)


class BaseCommand(ABC):
    """すべてのサブコマンドのための抽象基底クラス"""

    @property
    @abstractmethod
    def name(self) -> str:
        """サブコマンド名。"""
        pass

    @property
    @abstractmethod
    def definition(self) -> str:
        """サブコマンドの説明(ヘルプに表示される)。"""
        pass

    @abstractmethod
    def add_arguments(self, parser: argparse.ArgumentParser):
        """サブコマンド固有の引数を登録する。"""
        pass

    @abstractmethod
    async def run(self, args: argparse.Namespace) -> CommandResult:
        """
        サブコマンドを実行する非同期メソッド。
        :param args: 解析済みの引数
        """
        pass


class CommandManager:
    """
    指定されたパッケージから利用可能なサブコマンドを発見、ロード、管理する。
    """

    def __init__(self, command_packages: List[str]):
        self.command_packages = command_packages
        self.command_catalog: Dict[str, Type[BaseCommand]] = {}
        self.discover_commands()

    def discover_commands(self):
        """
        パッケージのディレクトリをスキャンし、モジュールをインポートしてコマンドクラスを登録する。
        """
        logger.info(f"Discovering commands in: {self.command_packages}")
        for package_name in self.command_packages:
            try:
                package = importlib.import_module(package_name)
            except ImportError as e:
                logger.warning(f"Command package not found: {package_name} ({e})")
                continue

            for command_dir in getattr(package, "__path__", []):
                for filename in sorted(os.listdir(command_dir)):
                    if not filename.endswith(".py") or filename.startswith("__"):
                        continue
                    module_name = f"{package_name}.{filename[:-3]}"
                    try:
                        module = importlib.import_module(module_name)
                    except Exception as e:
                        logger.error(
                            f"Failed to load commands from {module_name}: {e}", exc_info=True
                        )
                        continue

                    for _, obj in inspect.getmembers(module, inspect.isclass):
                        if (issubclass(obj, BaseCommand) and obj is not BaseCommand
                                and not inspect.isabstract(obj)
                                and obj.__module__ == module.__name__):
                            command_name = obj.name
                            if command_name in self.command_catalog:
                                logger.warning(
                                    f"Duplicate command name '{command_name}' found. Overwriting."
                                )
                            self.command_catalog[command_name] = obj
                            logger.debug(f"Discovered command '{command_name}' from {filename}")

    def get_command_class(self, name: str) -> Type[BaseCommand] | None:
        """
        カタログからコマンドクラスを名前で取得する。
        """
        return self.command_catalog.get(name)

    def get_all_command_classes(self) -> Dict[str, Type[BaseCommand]]:
        """
        発見したすべてのコマンドクラスのカタログを返す。
        """
        return self.command_catalog


# --- argparse の型変換 ---

def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not (value > 0 and value != float("inf")):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def finite_float(text: str) -> float:
    value = float(text)
    if value != value or value in (float("inf"), float("-inf")):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text}")
    return value


def seed_value(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value
