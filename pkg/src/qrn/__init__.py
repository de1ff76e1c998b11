"""Query-Reduction Networks in numpy."""
from .autograd import Parameter, Tape, Tensor, backward, check_gradients
from .cell import GateTrace, QrnConfig, QrnParams, init_params, run_layer, stack_forward
from .data import DatasetSplit, Example, load_dialog_task, load_qa_task
from .model import QrnModel
from .scan import benchmark_scan, build_decay_matrix, scan_scalar, scan_vector
from .trainer import TrainConfig, TrainLog, evaluate, train

__version__ = "0.1.0"
