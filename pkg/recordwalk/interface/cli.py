import argparse
import asyncio
import logging
import sys
from typing import Dict, List, Optional

from .. import __version__
from ..core.command import BaseCommand, CommandManager, UsageError
from ..core.config import get_settings
from ..core.manifest import RunManifest, write_table

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s.%(funcName)s - %(levelname)s - %(message)s'
COMMAND_PACKAGES = ["recordwalk.commands"]

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2


def configure_logging(level: Optional[str] = None):
    """ログは標準エラーへ出す。標準出力は結果の表のために空けておく。"""
    logging.basicConfig(
        level=level or get_settings().log_level,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )


class CommandLineInterface:
    """
    発見したサブコマンドから argparse のパーサを組み立て、1回の実行を仲介するクラス。
    """

    def __init__(self, manager: Optional[CommandManager] = None):
        self.manager = manager or CommandManager(COMMAND_PACKAGES)
        self.commands: Dict[str, BaseCommand] = {
            name: command_class()
            for name, command_class in sorted(self.manager.get_all_command_classes().items())
        }
        self.parser = self.build_parser()

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="recordwalk",
            description="Record statistics of random walks with drift: closed forms, "
                        "generating functions, Monte Carlo and price data.",
        )
        parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        parser.add_argument("--json", action="store_true",
                            help="write {manifest, rows} JSON instead of CSV")
        parser.add_argument("--output", metavar="PATH", help="write the table here instead of stdout")
        parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                            help="override RECORD_WALK_LOG_LEVEL")
        subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
        for name, command in self.commands.items():
            summary = command.definition.splitlines()[0]
            subparser = subparsers.add_parser(name, help=summary, description=command.definition)
            command.add_arguments(subparser)
        return parser

    async def start(self, argv: Optional[List[str]] = None) -> int:
        """引数を解釈してサブコマンドを1回実行し、終了コードを返す。"""
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            # argparse は使い方の誤りで 2、--help / --version で 0 を返す
            return e.code if isinstance(e.code, int) else EXIT_USAGE_ERROR
        if args.log_level:
            logging.getLogger().setLevel(args.log_level)

        command = self.commands[args.command]
        manifest = RunManifest(subcommand=command.name, parameters={})
        logger.info(f"Running '{command.name}' (run {manifest.run_id}).")
        try:
            result = await command.run(args)
        except UsageError as e:
            print(f"recordwalk {args.command}: error: {e}", file=sys.stderr)
            return EXIT_USAGE_ERROR
        except (ValueError, OSError) as e:
            logger.error(f"'{command.name}' failed: {e}")
            return EXIT_RUNTIME_ERROR

        manifest.parameters = result.parameters
        manifest.seed = result.seed
        manifest.summary = result.summary
        manifest.finish()
        try:
            if args.output:
                with open(args.output, "w", encoding="utf-8", newline="") as stream:
                    write_table(result.table, manifest, stream, as_json=args.json)
            else:
                write_table(result.table, manifest, sys.stdout, as_json=args.json)
        except OSError as e:
            logger.error(f"Could not write the result table: {e}")
            return EXIT_RUNTIME_ERROR
        return EXIT_OK


async def main(argv: Optional[List[str]] = None) -> int:
    interface = CommandLineInterface()
    return await interface.start(argv)


def run():
    """コンソールスクリプトの入口。"""
    configure_logging()
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("\nInterrupted by user. Exiting...", file=sys.stderr)
        sys.exit(130)
