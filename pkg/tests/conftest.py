import numpy as np
import pytest

from acoustopt.geometry import ProblemSetup, build_grid

# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_setup():
    """8 m x 4 m room: every 1 m boundary is a grid line for nx = 8k, ny = 4k."""
    return ProblemSetup(a=8.0, b=4.0, h_c=1.0, x_f=1.0, y_f=1.0, x_s=6.0, y_s=1.0, a_s=2.0, b_s=2.0)


@pytest.fixture
def small_grid(small_setup):
    return build_grid(small_setup, 16, 8)


@pytest.fixture
def tiny_cfg():
    """8 m x 4 m room on 16 x 8 voxels with a two-voxel filter; seconds per run."""
    from acoustopt.config import RunConfig

    return RunConfig(a=8.0, b=4.0, h_c=1.0, x_f=1.0, y_f=1.0, x_s=6.0, y_s=1.0, nx=16, ny=8,
                     frequency=55.0, n_v_stage1=2, n_v_stage2=2, stage1_epochs=6,
                     stage2_max_epochs=3, tuning_epochs=2, filter_radius=1.0).validate()


@pytest.fixture
def unet_cfg():
    """Reference room at 144 x 72 voxels: the smallest grid the U-net accepts."""
    from acoustopt.config import RunConfig

    return RunConfig(nx=144, ny=72, filter_radius=0.25, stage1_epochs=2, stage2_max_epochs=0,
                     tuning_epochs=1).validate()
