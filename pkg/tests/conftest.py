"""Shared fixtures.  The desk-scale run is built once per session and reused."""
from dataclasses import dataclass

import pytest

from latentcond.harness import ExperimentConfig, resolve, run_experiment
from latentcond.harness.experiment import Fixture, RunDir, load_fixture


@dataclass
class DeskRun:
    cfg: ExperimentConfig
    root: object
    fixture: Fixture
    translator: object
    dt: object
    seconds: float


@pytest.fixture(scope="session")
def desk(tmp_path_factory) -> DeskRun:
    import time

    cfg = resolve(ExperimentConfig(out_dir=str(tmp_path_factory.mktemp("desk_a"))))
    tic = time.perf_counter()
    root = run_experiment(cfg)
    seconds = time.perf_counter() - tic
    rd = RunDir(root)
    return DeskRun(cfg, root, load_fixture(cfg, rd), rd.load(rd.model("translator")),
                   rd.load(rd.model("translator_dt")), seconds)
