"""Plaintext similarity metrics, score derivation and the reconstruction-cost demo.

This module is the ground-truth side of the dual-route check: the private
protocol must reproduce, pair for pair, exactly what these set computations
give on the plaintext union graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .graphs import Graph, GraphError

__all__ = [
    "METRICS",
    "SimilarityReport",
    "oracle_scores",
    "derive_scores",
    "score_value",
    "score_below",
    "neighborhood_candidates",
    "stirling_bound",
    "full_graph_cost",
    "CSV_HEADER",
]

METRICS = ("cn", "jaccard", "cosine")

CSV_HEADER = "x,y,cn,deg_x,deg_y,jaccard,cosine"


@dataclass(frozen=True, slots=True)
class SimilarityReport:
    """Per-pair score triple plus the similarities derived from it.

    The triple (cn, deg_x, deg_y) is sufficient for common neighbors,
    Jaccard and cosine.  Degenerate denominators (isolated endpoints)
    yield a similarity of 0.
    """

    x: int
    y: int
    cn: int
    deg_x: int
    deg_y: int

    @property
    def jaccard(self) -> float:
        union = self.deg_x + self.deg_y - self.cn
        return self.cn / union if union else 0.0

    @property
    def cosine(self) -> float:
        prod = self.deg_x * self.deg_y
        return self.cn / math.sqrt(prod) if prod else 0.0

    def jaccard_exact(self) -> Fraction:
        union = self.deg_x + self.deg_y - self.cn
        return Fraction(self.cn, union) if union else Fraction(0)

    def csv_row(self) -> str:
        return (f"{self.x},{self.y},{self.cn},{self.deg_x},{self.deg_y},"
                f"{self.jaccard:.12g},{self.cosine:.12g}")


def derive_scores(x: int, y: int, cn: int, deg_x: int, deg_y: int) -> SimilarityReport:
    """Build a report from a protocol triple, validating its consistency."""
    if min(cn, deg_x, deg_y) < 0 or cn > min(deg_x, deg_y):
        raise ValueError(
            f"inconsistent score triple cn={cn}, deg_x={deg_x}, deg_y={deg_y}")
    return SimilarityReport(x, y, cn, deg_x, deg_y)


def oracle_scores(g: Graph, x: int, y: int) -> SimilarityReport:
    """Exact plaintext scores from the graph's adjacency."""
    if x == y:
        raise GraphError(f"similarity of a node with itself is undefined (node {x})")
    gx = g.neighbors(x)
    gy = g.neighbors(y)
    return SimilarityReport(x, y, len(gx & gy), len(gx), len(gy))


def score_value(report: SimilarityReport, metric: str) -> float:
    if metric == "cn":
        return float(report.cn)
    if metric == "jaccard":
        return report.jaccard
    if metric == "cosine":
        return report.cosine
    raise ValueError(f"unknown metric {metric!r}")


def score_below(report: SimilarityReport, metric: str, threshold) -> bool:
    """Exact strict comparison score < threshold, immune to float rounding.

    For cosine the comparison cn / sqrt(dx*dy) < t is evaluated as
    cn^2 < t^2 * dx * dy, which is exact in rational arithmetic.
    """
    if metric == "cn":
        return report.cn < threshold
    # floats go through their decimal repr so a threshold written as 0.2
    # means exactly 1/5, not the nearest binary float
    if isinstance(threshold, float):
        t = Fraction(str(threshold))
    else:
        t = Fraction(threshold)
    if t < 0:
        return False
    if metric == "jaccard":
        return report.jaccard_exact() < t
    if metric == "cosine":
        prod = report.deg_x * report.deg_y
        if prod == 0:
            return 0 < t
        return Fraction(report.cn * report.cn, prod) < t * t
    raise ValueError(f"unknown metric {metric!r}")


_MAX_DEMO_NODES = 14


def neighborhood_candidates(g: Graph, target: int, observed=None) -> int:
    """Exhaustively count neighborhoods of ``target`` consistent with CN observations.

    ``observed`` maps every other node i to the claimed |S ∩ Γ(i)| for the
    candidate neighborhood S; it defaults to the true common-neighbor counts
    of the graph, in which case the count is at least 1 (the real
    neighborhood is consistent).  Enumeration is 2^(n-1) subsets, so the
    graph is capped at desk scale.
    """
    n = g.n
    if n > _MAX_DEMO_NODES:
        raise GraphError(f"exhaustive enumeration capped at n={_MAX_DEMO_NODES}, got {n}")
    if not 0 <= target < n:
        raise GraphError(f"target {target} out of range")
    others = [i for i in range(n) if i != target]
    if observed is None:
        tn = g.neighbors(target)
        observed = {i: len(tn & g.neighbors(i)) for i in others}
    # Bitmask positions index the candidate universe V \ {target}.
    pos = {node: idx for idx, node in enumerate(others)}
    masks = []
    for i in others:
        m = 0
        for nb in g.neighbors(i):
            if nb != target:
                m |= 1 << pos[nb]
        masks.append((m, observed[i]))
    count = 0
    for s in range(1 << len(others)):
        if all((s & m).bit_count() == want for m, want in masks):
            count += 1
    return count


def stirling_bound(n: int) -> float:
    """Stirling approximation bound 2^(n-2)/sqrt(n-2) for one neighborhood."""
    if n <= 2:
        raise ValueError("bound defined for n > 2")
    return 2.0 ** (n - 2) / math.sqrt(n - 2)


def full_graph_cost(n: int) -> float:
    """Analytic worst-case cost 2^n * sqrt(n) of reconstructing the whole graph."""
    return 2.0 ** n * math.sqrt(n)
