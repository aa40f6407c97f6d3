from . import tensor as F
from .checkpoint import load_checkpoint, save_checkpoint
from .graph_ops import SparseAdj
from .layers import (
    ChebConv,
    GATConv,
    GCNConv,
    GraphGRUCell,
    GRUCell,
    Linear,
    Module,
    cheb_conv,
    gat_conv,
    gcn_conv,
    graph_gru_cell,
    gru_cell,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor

__all__ = [
    "Adam", "AdamState", "ChebConv", "F", "GATConv", "GCNConv", "GRUCell", "GraphGRUCell",
    "Linear", "Module", "SparseAdj", "Tensor", "adam_step", "cheb_conv", "gat_conv", "gcn_conv",
    "graph_gru_cell", "gru_cell", "load_checkpoint", "save_checkpoint",
]
