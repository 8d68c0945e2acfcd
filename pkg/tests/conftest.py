import asyncio
import io
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
import pandas as pd
import pytest

from recordwalk.core import analytic, config
from recordwalk.core.manifest import read_table
from recordwalk.interface import cli

ENV_VARS = ("RECORD_WALK_THREADS", "RECORD_WALK_RATE_CONSTANT", "RECORD_WALK_LOG_LEVEL")


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Each test sees default settings unless it sets the environment itself."""
    for name in ENV_VARS:
        monkeypatch.delenv(name, raising=False)
    config.get_settings.cache_clear()
    analytic.asymptotic_rate_crossover.cache_clear()
    yield
    config.get_settings.cache_clear()
    analytic.asymptotic_rate_crossover.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@dataclass
class CliRun:
    code: int
    stdout: str
    stderr: str

    def table(self) -> pd.DataFrame:
        return read_table(io.StringIO(self.stdout))[1]

    def manifest(self) -> Dict[str, Any]:
        return read_table(io.StringIO(self.stdout))[0]

    def data_section(self) -> str:
        return self.stdout.split("\n", 1)[1]


@pytest.fixture
def run_cli(capsys):
    def _run(*argv: str) -> CliRun:
        code = asyncio.run(cli.main(list(argv)))
        captured = capsys.readouterr()
        return CliRun(code=code, stdout=captured.out, stderr=captured.err)
    return _run
