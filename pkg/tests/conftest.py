import numpy as np
import pytest

from mspc_guard import bench

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def record_criterion():
    """Collects one pass/fail line per acceptance criterion."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_config():
    """Short runs for harness tests: 3 calibration runs of 2 h."""
    return bench.ExperimentConfig(calibration_runs=3, duration_h=2.0, onset_h=1.0, seeds=(0, 1))


@pytest.fixture(scope="session")
def small_calibration(small_config):
    return bench.build_calibration(small_config)


@pytest.fixture(scope="session")
def full_calibration():
    """The default calibration: 30 attack-free runs of 24 h."""
    return bench.build_calibration(bench.ExperimentConfig())


@pytest.fixture
def toy_matrix():
    rng = np.random.default_rng(7)
    base = np.array([[1, 2, 0.5], [-1, -2, -0.5], [2, 4, 1], [-2, -4, -1]], dtype=float)
    return base + 1e-3 * rng.standard_normal(base.shape)


@pytest.fixture
def gaussian_data():
    rng = np.random.default_rng(3)
    cov = np.array([[4.0, 1.2, 0.3, 0.0], [1.2, 2.0, 0.4, 0.1],
                    [0.3, 0.4, 1.0, 0.2], [0.0, 0.1, 0.2, 0.5]])
    return rng.multivariate_normal([10.0, -3.0, 0.5, 100.0], cov, size=2000)
