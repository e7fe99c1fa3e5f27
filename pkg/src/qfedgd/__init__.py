"""Simulation of quantum federated linear regression with secure gradient aggregation."""
from . import _backend
from .fixedpoint import FixedPoint, round_half_away
from .flr import ClientDataset, TrainConfig, classical_gradient, converged, train, update_parameters
from .qgd import GradientEstimate, local_gradient
from .qsim import Histogram, StateVector
from .qsmc import CrtConfig, ProtocolTranscript, crt_reconstruct, run_protocol
from .state_prep import AngleTree, EncodingConstants, build_angle_tree

__version__ = "0.1.0"


def kernel_backend() -> str:
    """Name of the active statevector kernels ("cython" or "python")."""
    return _backend.NAME
