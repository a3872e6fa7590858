import numpy as np
import pytest
import torch

from style_cloak.encoder import load_encoder
from style_cloak.samples import synthetic_artwork


@pytest.fixture(scope="session")
def toy():
    return load_encoder("toy")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def artwork():
    return synthetic_artwork(0)


def rand_image(rng, h=16, w=16, c=3):
    return torch.from_numpy(rng.uniform(0.0, 1.0, size=(c, h, w)))


def hh_pattern(h, w, amplitude):
    """Checkerboard with zero 2x2 block sums: lives entirely in the hh band."""
    yy, xx = np.mgrid[0:h, 0:w]
    return torch.from_numpy(amplitude * np.where((yy + xx) % 2 == 0, 1.0, -1.0))


# --- acceptance verdict lines ------------------------------------------------------

_VERDICTS: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    failed_setup = rep.when == "setup" and not rep.passed
    if rep.when == "call" or failed_setup:
        verdict = "PASS" if rep.passed else "FAIL"
        _VERDICTS.append((str(mark.args[0]), verdict, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit, verdict, name in _VERDICTS:
        terminalreporter.write_line(f"criterion {crit:<9} {verdict}  {name}")
