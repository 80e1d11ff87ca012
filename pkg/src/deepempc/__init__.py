"""deepempc: linear MPC controllers, explicit piecewise-affine laws,
exact ReLU-network representations, learned approximations, and
statistical safety verification."""

from . import (
    controllers,
    dynamics,
    errors,
    geometry,
    learn,
    linalg,
    mpc,
    mpqp,
    pwa,
    qp,
    relunet,
    verify,
)
from .dynamics import LtiSystem, Scenario, Trajectory, builtin_scenario, rollout
from .geometry import Box, Polytope
from .learn import MlpRegressor, Polynomial, PolynomialRegressor, TrainConfig
from .mpc import CondensedMpc, Dataset, condense, generate_dataset, mpc_control
from .mpqp import enumerate_explicit, memory_footprint_pwa
from .pwa import AffineTransform, ConvexPwa, PwaFunction, dc_decompose, normalize_domain
from .qp import QpProblem, QpSolution, check_kkt, solve_qp
from .relunet import (
    ExactRepresentation,
    ReluNetwork,
    build_max_network,
    exact_mpc_network,
    memory_footprint_net,
    region_lower_bound,
)
from .verify import (
    EllipsoidSafeSet,
    LabeledInitialSet,
    SvmSafeSet,
    generate_labeled_sets,
    hoeffding,
    mtl_label,
)

__version__ = "0.1.0"
