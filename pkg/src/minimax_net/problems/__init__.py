from .base import BestResponseError, ProblemError, ProblemInstance, project_ball, project_balls_rows
from .logistic import RobustLogisticWRM
from .oracle import StochasticOracle
from .quadratic import QuadraticSaddle

__all__ = [
    "BestResponseError",
    "ProblemError",
    "ProblemInstance",
    "QuadraticSaddle",
    "RobustLogisticWRM",
    "StochasticOracle",
    "project_ball",
    "project_balls_rows",
]
