"""Step graphons, cut-norms, steppings, versions and weak regularity."""

from .core import (
    GraphonError,
    Kernel,
    OrderedPartition,
    Partition,
    RearrangementMap,
    StepGraphon,
    adaptive_stepping,
    apply_ordered_partition,
    common_refinement,
    int_f,
    l1_distance,
    quotient,
    stepping,
    validate,
)
from .cutnorm import (
    CutNormResult,
    cut_distance,
    cutnorm,
    cutnorm_bilinear_exact,
    cutnorm_symmetric,
    cutnorm_witness_set,
)
from .functionals import ENTROPY, NEG_SQUARE, ConcaveFunctional, binary_entropy, from_table, get_functional
from .regularity import (
    Graph,
    VertexPartition,
    densities,
    finite_index_experiment,
    index_pump,
    min_int_partition,
    partition_index,
    weak_regularity_check,
    weak_regularity_partition,
)
from .weakstar import (
    RectProfile,
    ShiftData,
    StripeSampleConfig,
    chessboard_family,
    ell_part_shift_experiment,
    improvement_experiment,
    noel_family,
    rect_profile,
    sample_stripe_version,
    shift_left_version,
    stepping_attainment_trial,
    weakstar_pseudometric,
)

__version__ = "0.1.0"
