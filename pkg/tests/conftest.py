import numpy as np
import pytest
import torch
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def textured_frame(rng):
    """A 96x96 uint8 frame with smooth structure plus a bright square target."""
    yy, xx = np.mgrid[0:96, 0:96]
    base = 100 + 40 * np.sin(xx / 7.0) * np.cos(yy / 11.0)
    base[40:60, 30:50] = 220 - 30 * np.sin(xx[40:60, 30:50] / 2.0)
    return np.clip(base + rng.normal(0, 2, base.shape), 0, 255).astype(np.uint8)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; returns the pass flag so the test can assert on it."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_VERDICTS].append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
