"""LPV-embedded MPC with GP prediction of the scheduling-induced error."""

__version__ = "0.1.0"

from .errorbank import ErrorBank, ErrorPrediction
from .gp import GpModel, HyperBox, Kernel, Posterior
from .model import (
    ContinuousModel,
    LpvModel,
    discretize_euler,
    eval_A,
    make_unbalanced_disk,
    rollout,
    sinc,
    step,
)
from .mpc import MpcConfig, MpcStep, TrajectoryLog, condense, run_loop, tighten
from .qp import QpProblem, QpSolution, solve
from .stabilizer import StabilizedModel, closed_A, synthesize_lqr, terminal_weight

__all__ = [
    "ContinuousModel",
    "ErrorBank",
    "ErrorPrediction",
    "GpModel",
    "HyperBox",
    "Kernel",
    "LpvModel",
    "MpcConfig",
    "MpcStep",
    "Posterior",
    "QpProblem",
    "QpSolution",
    "StabilizedModel",
    "TrajectoryLog",
    "closed_A",
    "condense",
    "discretize_euler",
    "eval_A",
    "make_unbalanced_disk",
    "rollout",
    "run_loop",
    "sinc",
    "solve",
    "step",
    "synthesize_lqr",
    "terminal_weight",
    "tighten",
]
