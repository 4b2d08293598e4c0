from . import nn, ops
from .gradcheck import finite_difference_gradient, max_relative_error
from .ops import ste_binarize
from .tensor import Graph, Node, Tensor, backward_accumulate, current_graph, forward_graph_eval
from .tensor_file import TensorFile, read_tensor_file, write_tensor_file

__all__ = [
    'Graph',
    'Node',
    'Tensor',
    'TensorFile',
    'backward_accumulate',
    'current_graph',
    'finite_difference_gradient',
    'forward_graph_eval',
    'max_relative_error',
    'nn',
    'ops',
    'read_tensor_file',
    'ste_binarize',
    'write_tensor_file',
]
