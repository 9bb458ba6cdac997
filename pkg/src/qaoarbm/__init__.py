"""Classical simulation of QAOA Max-Cut circuits with RBM wavefunctions.

Diagonal cost layers are applied exactly by growing the network; mixer
rotations are fitted one qubit at a time by stochastic reconfiguration.
"""

from ._jit import USE_NUMBA
from .errors import (
    ContractError,
    EdgeListError,
    GradientBlowupError,
    NumericalOverflowError,
    SolverError,
)
from .exact import (
    DenseState,
    brute_force_optimum,
    dense_fidelity,
    exact_p1_cost,
    rbm_to_dense,
    statevector_cost,
    statevector_qaoa,
)
from .graph import Graph, cut_value, generate_random_regular, parse_edge_list, write_edge_list
from .qaoa import (
    CircuitTrace,
    CompressionConfig,
    QaoaAngles,
    apply_ub,
    apply_uc,
    compress,
    estimate_cost,
    landscape_sweep,
    optimize_angles,
    run_qaoa,
)
from .rbm import RbmState, init_plus, load_state, log_amplitude, log_derivatives, save_state
from .sampler import McmcConfig, SampleBatch, default_config, sample_rbm
from .sr import (
    OptimizationTrace,
    RbmTarget,
    RxTarget,
    SrConfig,
    estimate_fidelity,
    estimate_gradient,
    estimate_s_matrix,
    optimize_ground_state,
    optimize_to_target,
    rx_target_amplitude,
    sr_update,
)

__version__ = "0.1.0"
