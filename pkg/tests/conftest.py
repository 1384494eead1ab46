import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from panoharris.evaluation import textured_master
from panoharris.pixels import GrayImage

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def master():
    return textured_master(1024, 576, seed=0)


@pytest.fixture(scope="session")
def texture256():
    return textured_master(256, 256, seed=3)


@pytest.fixture(scope="session")
def checkerboard():
    y, x = np.mgrid[0:64, 0:64]
    return GrayImage(np.where(((x // 8) + (y // 8)) % 2 == 0, 40, 200).astype(np.uint8))


_ACCEPTANCE = []


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = "PASS" if call.excinfo is None else "FAIL"
    _ACCEPTANCE.append((number, f"criterion {number} {status} {title}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
