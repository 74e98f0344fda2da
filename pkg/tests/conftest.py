import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=15, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def vdp_emulator():
    """Van der Pol emulator at the reference settings (n=24, dt=0.01)."""
    from flowemu.design import estimate_bounds
    from flowemu.dynsys import vanderpol
    from flowemu.emulator import build

    system = vanderpol(5.0)
    box = estimate_bounds(system, (0.1, 0.1))
    return build(system, box, 24, 0.01, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        for line in results[criterion]:
            terminalreporter.write_line(line)
