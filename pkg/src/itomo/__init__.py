"""Tomography of lossy multimode interferometers from two-photon visibilities."""

from .matrices import (
    canonicalize_phases,
    haar_random_unitary,
    matrix_fidelity,
    matrix_from_dict,
    matrix_to_dict,
    resolve_conjugate_ambiguity,
    unitarity_defect,
)
from .optics import (
    HomResult,
    LossModel,
    ModeQuad,
    SourceModel,
    apply_losses,
    g2_central,
    g2_side,
    hom_indistinguishability,
    peak_areas,
    power_matrix,
    reduction_check,
    submatrix,
    visibility,
)
from .reck import ReckParams, reck_compose, reck_decompose
from .tomography import (
    OptimizerConfig,
    ReconstructionResult,
    VisibilityDataset,
    VisibilityRecord,
    cost,
    measurement_plan,
    reconstruct,
    sinkhorn_knopp,
    sst_initial_guess,
    visibility_convert,
)
from .sampling import (
    CountsRecord,
    SourceFit,
    classical_fidelity,
    fit_source,
    predict_counts,
)
from .bench import (
    BenchConfig,
    SweepResult,
    SyntheticInstance,
    add_noise,
    baseline_sst,
    baseline_tillmann,
    generate_instance,
    run_sweep,
)
from .histograms import Histogram, ingest_histogram

__version__ = "0.1.0"
