"""Distributed stochastic proximal-gradient optimization over networks."""

__version__ = "0.1.0"

from .algorithms import (
    ALGORITHMS,
    CentralState,
    FrameworkMatrices,
    GradientEvaluator,
    RunConfig,
    RunRecord,
    StepsizeSchedule,
    SwarmState,
    init_swarm,
    run,
    run_seeds,
    step_norm_csgd,
    step_norm_dsgt,
    step_norm_ed,
    step_prox_csgd,
    step_unified,
)
from .core import (
    CompositeProblem,
    agent_normal_map,
    consensus_error,
    natural_residual,
    normal_map,
    normal_map_lipschitz,
)
from .data import (
    Dataset,
    Partition,
    filter_binary,
    load_mnist,
    parse_idx,
    partition_heterogeneous,
    serialize_idx,
    synthetic_binary,
)
from .mixing import (
    MixingMatrix,
    Topology,
    build_complete,
    build_from_edge_file,
    build_ring,
    build_star,
    build_topology,
    build_weights,
    eig,
    lazy,
    metropolis_weights,
    sqrt_I_minus_W,
    uniform_weights,
)
from .oracle import (
    ABCMeta,
    MinibatchSampler,
    MlpArch,
    MlpObjective,
    QuadraticObjective,
    TanhObjective,
    agent_seed,
    fit_abc,
    sample_gradient,
)
from .prox import (
    BoxProx,
    ElasticNetProx,
    L1Prox,
    ProxOperator,
    ZeroProx,
    brute_force_prox,
    make_prox,
    prox_box,
    prox_elastic_net,
    prox_l1,
    prox_zero,
    soft_threshold,
)
