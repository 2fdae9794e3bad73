import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hstqgcn.config import tiny_config
from hstqgcn.pipeline.data import prepare_dataset
from hstqgcn.pipeline.synthetic import generate_synthetic_city

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_bundle():
    """4x4 city, 6 taxis: cheap enough to train tiny models in unit tests."""
    grid, pois, trips = generate_synthetic_city(seed=3, n_rows=4, n_cols=4, n_taxis=6, trips_per_taxi=30, k_poi=3)
    cfg = tiny_config(bbox=list(grid.bbox), cell_size_m=500.0)
    return cfg, prepare_dataset(trips, pois, cfg, grid)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request, capsys):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def _verdict(name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
