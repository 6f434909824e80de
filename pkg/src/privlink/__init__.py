"""Two-party private link prediction over distributed graphs.

Subpackages: group primitives (commutative blinding on a prime-order
curve), graph model and partition sampling, the two-party protocol with
transcript accounting, wire transport, plaintext similarity oracle, and
the poisoning/sanitization harness.
"""

from .graphs import Graph, Partition, load_edge_list, partition, partition_by_ppt, union_graph
from .protocol import PairQuery, run_pairs, run_single
from .similarity import SimilarityReport, derive_scores, oracle_scores

__all__ = [
    "Graph",
    "Partition",
    "load_edge_list",
    "partition",
    "partition_by_ppt",
    "union_graph",
    "PairQuery",
    "run_pairs",
    "run_single",
    "SimilarityReport",
    "derive_scores",
    "oracle_scores",
]

__version__ = "0.1.0"
