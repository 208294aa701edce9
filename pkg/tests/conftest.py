import numpy as np
import pytest

from lpvmpc.model import discretize_euler, make_unbalanced_disk
from lpvmpc.stabilizer import synthesize_lqr

TS = 0.01
Q_MPC = np.diag([8.0, 0.1])
R_MPC = np.array([[0.5]])
X_BOUNDS = np.array([[-2.0 * np.pi, 2.0 * np.pi], [-10.0 * np.pi, 10.0 * np.pi]])
U_BOUNDS = np.array([[-10.0, 10.0]])


@pytest.fixture(scope="session")
def disk_model():
    return discretize_euler(make_unbalanced_disk(), TS)


@pytest.fixture(scope="session")
def disk_stabilized(disk_model):
    return synthesize_lqr(disk_model, Q_MPC, R_MPC, [1.0])
