"""2D ultrasound computed tomography toolkit.

Simulates waveform acquisition on a circular transducer ring with a
finite-difference acoustic wave solver, reconstructs speed-of-sound maps
via adjoint-state full-waveform inversion with stochastic source encoding,
generates breast-mimicking phantoms with tumor truth, and scores
reconstructions with image-quality and tumor-detection metrics.
"""

from .model import (
    CFL_LIMIT,
    WATER_SPEED,
    AcquisitionConfig,
    ExcitationPulse,
    Grid2D,
    GeometryError,
    InvalidMedium,
    MeasurementTensor,
    NumericalBlowup,
    ShapeMismatch,
    SoundSpeedMap,
    TransducerArray,
    UnstableTimestep,
    UsctError,
    cfl_check,
    default_config,
    points_per_wavelength,
    pulse_eval,
    transducer_positions,
)
from .wavesim import (
    Propagator,
    SamplingOperator,
    WaveField,
    forward_solve,
    sample_traces,
    simulate_acquisition,
)
from .encoding import (
    EncodedSource,
    EncodingMatrix,
    draw_encoding_vector,
    encode_source,
    encode_tensor,
    make_encoder,
)
from .fwi import (
    FwiError,
    FwiProblem,
    FwiResult,
    OptimizerState,
    gradient,
    make_optimizer,
    objective,
    reconstruct,
)
from .phantom import (
    InfeasibleSpec,
    InvariantViolation,
    LabeledPhantom,
    PhantomSpec,
    default_spec,
    generate,
    load_raster,
    save_phantom,
)
from .assess import (
    RocCurve,
    assessment_report,
    connected_components,
    dice,
    rmse,
    roc,
    select_threshold,
    ssim,
)
from .io import (
    ChecksumMismatch,
    DatasetManifest,
    FormatError,
    UnsupportedVersion,
    ZeroSignal,
    add_noise,
    fnv1a64,
    read_config,
    read_encoder,
    read_manifest,
    read_mask,
    read_raster,
    read_sosmap,
    read_waveform,
    verify_manifest,
    write_config,
    write_encoder,
    write_manifest,
    write_mask,
    write_raster,
    write_sosmap,
    write_waveform,
)

__version__ = "0.1.0"
