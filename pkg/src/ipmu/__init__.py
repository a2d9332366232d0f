"""Solvers and analysis tools for the induced p-median problem with upgrades."""

from .instance import (
    Arc,
    GenSpec,
    Instance,
    InstanceFormatError,
    Violation,
    generate_instance,
    line3,
    load_instance,
    parse_instance,
    save_instance,
    serialize_instance,
    validate,
)
from .oracle import LimitExceeded, exact_enumerate, knapsack_vertex_oracle
from .paths import PathCache, compute_path_cache, path_arcs
from .search import SearchConfig, SearchResult, grasp, grasp_construct, hamming, kh_construct, local_search
from .ssg import build_ssg, export_dot, ssg_stats
from .upgrade import Evaluator, arc_weights, assign, evaluate, relax_edges

__version__ = "0.1.0"
