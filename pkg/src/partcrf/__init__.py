"""Dense CRF part segmentation with superpixel, containment and attachment potentials."""

from .evaluation import IoUReport, evaluate_dataset, evaluate_iou
from .grid import (
    DegenerateRowError,
    FormatError,
    ImageGrid,
    InvalidParameterError,
    LabelSet,
    argmax_labeling,
    normalize_rows,
)
from .inference import (
    CRFModel,
    InferenceConfig,
    InferenceTrace,
    init_marginals,
    mean_field,
    mean_field_step,
    run_inference,
    total_energy,
)
from .io import load_labelmap, load_unary, save_labelmap, save_unary, visualize
from .oracle import TinyInstance, exact_clique_message, exact_marginals, random_equivalence_check
from .potentials import (
    AttachmentClique,
    CliqueSet,
    ContainmentClique,
    PairwiseParams,
    attachment_message,
    build_attachment_cliques,
    build_containment_cliques,
    containment_message,
    pairwise_message,
    superpixel_message,
)
from .relations import RelationTable, learn_relations, lookup_attachment, lookup_containment
from .superpixels import BoundaryClique, SuperpixelMap, attachment_threshold, boundary_cliques, generate_superpixels
from .sweep import grid_search_weights

__version__ = "0.1.0"

__all__ = [
    "AttachmentClique", "BoundaryClique", "CRFModel", "CliqueSet", "ContainmentClique", "DegenerateRowError",
    "FormatError", "ImageGrid", "InferenceConfig", "InferenceTrace", "InvalidParameterError", "IoUReport",
    "LabelSet", "PairwiseParams", "RelationTable", "SuperpixelMap", "TinyInstance", "argmax_labeling",
    "attachment_message", "attachment_threshold", "boundary_cliques", "build_attachment_cliques",
    "build_containment_cliques", "containment_message", "evaluate_dataset", "evaluate_iou", "exact_clique_message",
    "exact_marginals", "generate_superpixels", "grid_search_weights", "init_marginals", "learn_relations",
    "load_labelmap", "load_unary", "lookup_attachment", "lookup_containment", "mean_field", "mean_field_step",
    "normalize_rows", "pairwise_message", "random_equivalence_check", "run_inference", "save_labelmap",
    "save_unary", "superpixel_message", "total_energy", "visualize",
]
