"""Fusion, cleanup, evaluation, and size-balanced splitting of 3-D lesion segmentations."""

from .components import (
    ComponentSet,
    ComponentStats,
    CONNECTIVITIES,
    annotate_peaks,
    label_components,
    remove_components,
)
from .ensemble import average_maps
from .errors import (
    DataRangeError,
    EndiannessError,
    GridMismatchError,
    NiftiError,
    NiftiFormatError,
    ShapeError,
    TruncatedFileError,
    UnsupportedDatatypeError,
    ValidationError,
)
from .metrics import (
    AggregateReport,
    MetricReport,
    MetricSummary,
    aggregate,
    dice,
    evaluate_case,
    hausdorff95,
    lesion_f1,
    simple_lesion_count,
    volume_difference,
)
from .nifti import NiftiHeader, read_volume, write_volume
from .postprocess import (
    PostprocessParams,
    PostprocessReport,
    RemovedComponent,
    postprocess,
)
from .splits import (
    FoldAssignment,
    FoldSummary,
    SubjectRecord,
    fold_summary,
    read_subject_records,
    size_balanced_split,
    write_fold_csv,
)
from .volume import (
    BinaryMask,
    ProbabilityMap,
    Volume3D,
    as_binary_mask,
    as_probability_map,
    check_compatible,
    foreground_count,
    require_compatible,
    threshold,
)

__version__ = "0.1.0"
