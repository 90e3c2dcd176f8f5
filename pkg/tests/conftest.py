import pytest

from leaklab import SimConfig, simulate


@pytest.fixture(scope="session", autouse=True)
def warm_engine():
    # compile the simulation kernel once so timed tests measure runs, not JIT
    simulate(SimConfig(scheduler="FCFS", lam=0.2, horizon=64, seed=0, attacker="periodic", omega=0.5))
    simulate(SimConfig(scheduler="LQF", lam=0.2, horizon=64, seed=0))
