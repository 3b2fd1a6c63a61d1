"""sflx: black-box image-classifier explanations via masked-pixel suites.

The pipeline: generate masked mutants of an image under a feedback loop on
the masking fraction, count per-pixel kept/flipped spectra from the
classifier's answers, rank pixels by a suspiciousness measure, and walk the
ranking until the kept subset alone reproduces the original label. Ground
truth oracles, deletion/IoU metrics, and composite benchmarks live in
``evaluation``; the ``sflx`` CLI wires everything together.
"""

from .classifiers import (
    Classifier,
    ConstantClassifier,
    KofSClassifier,
    LinearClassifier,
    PatchKeyedClassifier,
    Prediction,
    ProcessClassifier,
    TruthTableClassifier,
    parse_classifier_spec,
    unmasked_pixels,
)
from .errors import (
    ClassifierIOError,
    InvalidArgumentError,
    SflxError,
    UnsupportedFormatError,
)
from .evaluation import (
    ChimeraSpec,
    DeletionResult,
    DetectionReport,
    brute_force_min_explanation,
    chimera_generate,
    deletion_curve,
    explanation_size,
    iou,
    size_cdf_rows,
    topk_iou_detect,
)
from .explanation import (
    Explanation,
    build_explanation,
    explain_best,
    explanation_pixels,
    prune_explanation,
)
from .mutation import (
    AnnotatedMutant,
    MutationParams,
    TestSuite,
    generate_test_suite,
    suite_balance,
    suite_from_json,
    suite_to_json,
)
from .raster import (
    BackgroundColor,
    CellGrid,
    MaskSet,
    Raster,
    apply_mask,
    keep_only,
    load_image,
    save_image,
)
from .rng import make_rng, sample_without_replacement
from .sfl import (
    Measure,
    PixelRanking,
    SpectrumVector,
    compute_spectra,
    explanation_ranking,
    masking_spectra,
    measure_value,
    rank_pixels,
    ranking_csv,
    ranking_heatmap,
)

__version__ = "0.1.0"
