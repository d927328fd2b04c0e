"""sgpcodec: sparse-Gaussian-process compression of single LiDAR scans.

A scan is projected onto a spherical occupancy surface, summarized by M
inducing points of a variational sparse GP, and shipped as a ~6 KB
message; the receiver refits an exact GP on the M triples and restores
a pointcloud by variance-thresholded grid sampling.
"""

from .decoder import (
    BaseModel,
    DecoderConfig,
    SurfacePrediction,
    calibrate_threshold,
    decode,
    fit_base_gp,
    occupied_mask,
    predict_surface,
    sample_occupied,
    variance_threshold,
)
from .encoder import (
    CompressedObservation,
    EncoderConfig,
    InducingSet,
    TrainingSet,
    bound_grad_hyperparams,
    encode,
    encode_with_trace,
    exact_log_marginal,
    init_inducing_even,
    optimize_hyperparams,
    refine_inducing_swap,
    variational_bound,
)
from .evaluate import (
    BenchConfig,
    BenchReport,
    bench,
    compression_ratio,
    occupancy_confusion,
    rmsd,
)
from .geometry import (
    Pose,
    SensorModel,
    apply_pose,
    cartesian_to_spherical,
    desk_sensor,
    make_query_grid,
    project_to_surface,
    spherical_to_cartesian,
    surface_to_cloud,
    vlp16_sensor,
)
from .kernel import (
    NumericalError,
    RQHyperparams,
    kernel_matrix,
    kernel_matrix_grads,
    rq_kernel,
)
from .synth import (
    BoxScene,
    CylinderScene,
    GroundTruthScan,
    SphereScene,
    generate_scan,
    parse_scene,
)
from .transport import LinkStats, TransportError, send_observation, serve_base
from .wire import (
    WireFormatError,
    WireLengthError,
    deserialize,
    load_observation,
    save_observation,
    serialize,
)

__version__ = "0.1.0"
