import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from acfb.grid import GridSpec, init_field
from acfb.minimizer import MinimizeConfig, minimize_multilevel
from acfb.potential import Potential, triangle_wells

settings.register_profile("acfb", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("acfb")


@pytest.fixture(scope="session")
def small_tj():
    """Converged alpha = 1 triple junction on a 129^2 grid of half-width 16."""
    p = Potential(triangle_wells(), 1.0)
    spec = GridSpec.centered(2, 129, 16.0)
    f0 = init_field(spec, 2, "sector_wells", p.wells)
    cfg = MinimizeConfig(grad_tol=1e-3 * spec.h ** 2, max_iters=20000)
    res = minimize_multilevel(f0, p, cfg, levels=3)
    assert res.converged
    return p, res, cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
