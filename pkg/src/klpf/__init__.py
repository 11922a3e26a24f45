"""State estimation from quantized innovations.

Linear Gaussian state-space models, quantized linear filters (SOI-KF,
MLQ-KF), particle filters driven by quantization labels, and the
generalized closed skew-normal law of the conditioned state.
"""

from .experiments import (
    ExperimentConfig,
    FilterSpec,
    MseReport,
    emit_csv,
    load_config,
    preset,
    read_csv,
    run_experiment,
)
from .filters import (
    KalmanFilter,
    KalmanLikeParticleFilter,
    ParticleFilter,
    QuantizedKalmanFilter,
    TruncatedNormalParticleFilter,
    make_filter,
    run_filter,
)
from .gaussian import interval_prob, phi_cdf, phi_inv, truncated_normal_rvs
from .gcsn import (
    CondDensityState,
    Gcsn,
    cond_density_estimate,
    cond_density_initial,
    cond_density_measurement_update,
    cond_density_time_update,
    gcsn_add_gaussian,
    gcsn_affine_dynamics,
    gcsn_linear_map,
    gcsn_mgf,
    gcsn_pdf,
    gcsn_sample,
)
from .kalman import lambda_scheme_of, modified_riccati_step, riccati_sequence
from .model import RngStream, StateSpaceModel, Trajectory, simulate, simulate_batch
from .mvn import MvnBox, box_probability
from .quantizer import QuantizationScheme, sign_scheme, two_bit_scheme

__all__ = [name for name in dir() if not name.startswith("_")]
