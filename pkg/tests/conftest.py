import time

import pytest

from degenwave import config as cfgmod
from degenwave.cli import simulate_config


@pytest.fixture(scope="session")
def baseline_run():
    """Full baseline scenario, shared by the acceptance criteria: returns
    (setup, trajectory, report, wall_seconds)."""
    cfg = cfgmod.load_config("baseline")
    t0 = time.perf_counter()
    setup, traj, report, _ = simulate_config(cfg)
    elapsed = time.perf_counter() - t0
    return setup, traj, report, elapsed


@pytest.fixture(scope="session")
def small_setup():
    """Cheap weakly degenerate assembly for unit tests."""
    cfg = cfgmod.load_config("baseline")
    cfg = cfgmod.set_value(cfg, "mesh.n", 64)
    cfg = cfgmod.set_value(cfg, "channel.n_delta", 32)
    cfg = cfgmod.set_value(cfg, "integrator.t_final", 2.0)
    return cfgmod.build_setup(cfg)
