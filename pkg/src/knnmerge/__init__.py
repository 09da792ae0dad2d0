"""Approximate k-NN graph construction, merging, and hierarchical search."""

from .core import (
    Dataset,
    DistanceCounter,
    Metric,
    distance,
    generate_itemsets,
    generate_uniform,
)
from .construct import (
    BuildReport,
    DescentParams,
    brute_force_graph,
    brute_force_queries,
    nn_descent,
)
from .diversify import (
    LayerAdjacency,
    diversify_graph,
    diversify_hierarchy,
    diversify_list,
)
from .evaluate import (
    merge_sweep,
    ratio_report,
    recall_at_k,
    scanning_rate,
)
from .graph import (
    KnnGraph,
    Neighbor,
    NeighborList,
    SplitGraph,
    merge_rear,
    phi,
    reverse,
    split,
    update_nn,
)
from .merge import (
    Hierarchy,
    HierarchyLayer,
    MergeParams,
    doubling_layer_sizes,
    h_merge,
    j_merge,
    s_merge,
)
from .search import (
    SearchParams,
    SearchResult,
    batch_search,
    best_first_search,
    flat_search,
    greedy_descend,
    hierarchical_search,
)

__version__ = "0.1.0"

__all__ = [
    "BuildReport",
    "Dataset",
    "DescentParams",
    "DistanceCounter",
    "Hierarchy",
    "HierarchyLayer",
    "KnnGraph",
    "LayerAdjacency",
    "MergeParams",
    "Metric",
    "Neighbor",
    "NeighborList",
    "SearchParams",
    "SearchResult",
    "SplitGraph",
    "batch_search",
    "best_first_search",
    "brute_force_graph",
    "brute_force_queries",
    "distance",
    "diversify_graph",
    "diversify_hierarchy",
    "diversify_list",
    "doubling_layer_sizes",
    "flat_search",
    "generate_itemsets",
    "generate_uniform",
    "greedy_descend",
    "h_merge",
    "hierarchical_search",
    "j_merge",
    "merge_rear",
    "merge_sweep",
    "nn_descent",
    "phi",
    "ratio_report",
    "recall_at_k",
    "reverse",
    "s_merge",
    "scanning_rate",
    "split",
    "update_nn",
]
