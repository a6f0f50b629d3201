"""Interactive one-shot architecture search over cell-based supergraphs."""

from .candidate import CandidateRecord, Mask, mask_is_valid, mask_to_subgraph, repair_mask, sample_mask
from .evaluation import EvaluatorSpec, SupernetEvaluator, TabularOracle
from .evolution import (
    FitnessTable,
    SearchState,
    choose_parents,
    cross_over,
    evolve,
    init_fitness,
    mutate,
    new_search_state,
    run_search,
    seed_population,
    update_fitness,
)
from .labeled_graph import LabeledGraph
from .projection import (
    DistanceMatrix,
    Embedding,
    build_distance_matrix,
    embed_2d,
    graph_edit_distance,
    recolor,
    sample_search_space,
)
from .rng import RngHub
from .steering import RegionConstraint, fix_paths, prune_paths, resolve_region, set_operation, set_region
from .supergraph import OpKind, TemplateNetwork, build_template, edit_template, enumerate_paths

__version__ = "0.1.0"
