from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gbrbm_ad.core import GbrbmParams

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_params(rng: np.random.Generator, n_v: int, n_h: int, scale: float = 1.0) -> GbrbmParams:
    return GbrbmParams(
        b=rng.normal(0, scale, n_v),
        c=rng.normal(0, scale, n_h),
        w=rng.normal(0, scale, (n_v, n_h)),
        sigma=rng.normal(0, 0.5, n_v),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


# acceptance criteria register here and are echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
