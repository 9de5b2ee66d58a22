from .grid import load_case, parse_case, build_ybus, edge_index
from .powerflow import solve_newton_raphson, SolverOptions
from .scenario import generate_dataset, read_dataset, LoadShapeConfig
from .model import GnnConfig, init_params, model_forward
from .training import TrainConfig, train
from .evaluation import evaluate, metrics, summarize

__all__ = ['load_case', 'parse_case', 'build_ybus', 'edge_index', 'solve_newton_raphson', 'SolverOptions',
           'generate_dataset', 'read_dataset', 'LoadShapeConfig', 'GnnConfig', 'init_params', 'model_forward',
           'TrainConfig', 'train', 'evaluate', 'metrics', 'summarize']
