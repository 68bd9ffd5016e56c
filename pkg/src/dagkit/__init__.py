"""dagkit: attention over directed acyclic graphs, restricted to each
node's reachability-based receptive field, with interchangeable dense
masked and sparse message-passing backends, depth positional encodings,
exact tape-based gradients, personalized-PageRank support checks, and
complexity benchmarks."""

from .attention import (
    attention_dense,
    attention_sparse,
    bind_stack,
    block_forward,
    exp_kernel,
    make_reach,
    readout,
    run_stack,
    sparse_plan,
    stack_forward,
)
from .dag import Dag, DepthVector, build_dag, compute_depth, reverse, topological_order
from .data_io import GeneratorSpec, dataset_stats, gen, load_edge_list, save_edge_list
from .encoding import DepthEncoding, add_encoding, depth_encoding
from .params import (
    AttentionLayerParams,
    TransformerBlockParams,
    TransformerStack,
    init_stack,
    load_checkpoint,
    save_checkpoint,
)
from .ppr import PprResult, ppr_direct, ppr_solve, support_check
from .reachability import (
    UNBOUNDED,
    ReachabilityIndex,
    build_index,
    dense_mask,
    load_index,
    save_index,
    stats,
)
from .tape import Gradients, Ref, Tape, backward, grad_check, replay
from .trainer import TaskSpec, TrainConfig, make_labels, train

__version__ = "0.1.0"
