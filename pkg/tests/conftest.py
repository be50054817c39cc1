"""Shared trained toy model: trained once per session, reused by toy and acceptance tests."""
import time

import pytest
import torch

from clcgen.sampler import FeedbackConfig
from clcgen.toy.model import TorchDenoiser
from clcgen.toy.suite import ReferenceRecipe, run_suite, train_reference

RECIPE = ReferenceRecipe()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training test")


class ReferenceRuns:
    """Trained reference denoiser plus memoized suite runs keyed by (beta, noise mode)."""

    def __init__(self):
        torch.set_num_threads(1)
        t0 = time.perf_counter()
        net, self.history = train_reference(RECIPE)
        self.train_seconds = time.perf_counter() - t0
        self.denoiser = TorchDenoiser(net)
        self.sched = RECIPE.schedule()
        self.scenes = RECIPE.validation()
        self.suite_seconds = 0.0
        self._runs = {}

    def suite(self, beta: float, mode: str = "fixed_zT"):
        key = (float(beta), mode)
        if key not in self._runs:
            t0 = time.perf_counter()
            cfg = FeedbackConfig(beta=beta, noise_mode=mode, seed=RECIPE.seed, cfg_scale=RECIPE.cfg_scale)
            self._runs[key] = run_suite(self.denoiser, self.scenes, self.sched, cfg, RECIPE.n_frames)
            self.suite_seconds += time.perf_counter() - t0
        return self._runs[key]


@pytest.fixture(scope="session")
def reference_runs():
    return ReferenceRuns()


@pytest.fixture(scope="session")
def reference_model(reference_runs):
    return reference_runs.denoiser


@pytest.fixture(scope="session")
def reference_suite(reference_runs):
    return reference_runs.suite(0.05)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
