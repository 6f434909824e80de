"""Dice-style graph poisoning and the threshold link-removal sanitizer.

The attack injects edges between nodes of different classes (optionally
also deleting same-class edges).  The defense scores every local edge,
either on the party's own graph (local scope) or on the two-party union
graph via the private protocol (distributed scope), and discards edges
whose similarity falls strictly below the party's threshold.  Quality is
reported as TPR/FPR against the known injected set, which stands in for
the downstream-model evaluation that is out of scope here.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field

from .graphs import Graph, GraphError, partition_by_ppt, union_graph
from .protocol import PairQuery, run_pairs
from .similarity import SimilarityReport, oracle_scores, score_below, score_value

__all__ = [
    "AttackSpec",
    "PoisonedGraph",
    "DefenseSpec",
    "SanitizationReport",
    "dice_attack",
    "sanitize",
    "defense_experiment",
    "EXPERIMENT_CSV_HEADER",
]

EXPERIMENT_CSV_HEADER = ("seed,ppt,r1,r2,metric,party,scope,threshold,"
                         "edges_scored,edges_removed,removed_injected,tpr,fpr")


@dataclass(frozen=True)
class AttackSpec:
    rate: float
    mode: str = "add-only"  # or "add-and-remove"
    seed: int = 0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"attack rate must be >= 0, got {self.rate}")
        if self.mode not in ("add-only", "add-and-remove"):
            raise ValueError(f"unknown attack mode {self.mode!r}")


@dataclass(frozen=True)
class PoisonedGraph:
    graph: Graph
    injected: frozenset[tuple[int, int]]
    removed: frozenset[tuple[int, int]]


@dataclass(frozen=True)
class DefenseSpec:
    metric: str  # "cn" | "jaccard" | "cosine"
    threshold: float | int
    scope: str = "local"  # or "distributed"

    def __post_init__(self):
        if self.metric not in ("cn", "jaccard", "cosine"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "cn":
            if self.threshold != int(self.threshold) or self.threshold < 0:
                raise ValueError(f"cn threshold must be a natural number, got {self.threshold}")
        elif not 0 <= self.threshold <= 1:
            raise ValueError(f"{self.metric} threshold must be in [0, 1], got {self.threshold}")
        if self.scope not in ("local", "distributed"):
            raise ValueError(f"unknown scope {self.scope!r}")


@dataclass(frozen=True)
class SanitizationReport:
    edges_scored: int
    edges_removed: int
    removed_injected: int
    removed_clean: int
    tpr: float | None  # None when no injected edges exist to detect
    fpr: float | None


def dice_attack(g: Graph, spec: AttackSpec) -> PoisonedGraph:
    """Inject exactly round(rate * |E|) inter-class edges, optionally removing
    an equal share of intra-class ones.

    In add-only mode the whole budget goes to injections; add-and-remove
    splits it evenly (injections get the odd half), with removals capped by
    how many intra-class edges exist.
    """
    if g.labels is None:
        raise GraphError("dice attack requires node labels")
    budget = round(spec.rate * g.num_edges)
    if spec.mode == "add-only":
        n_add, n_remove = budget, 0
    else:
        n_remove = budget // 2
        n_add = budget - n_remove
    rng = random.Random(spec.seed)
    labels = g.labels
    candidates = [(u, v)
                  for u in range(g.n) for v in range(u + 1, g.n)
                  if labels.get(u) is not None and labels.get(v) is not None
                  and labels[u] != labels[v] and (u, v) not in g.edges]
    if len(candidates) < n_add:
        raise GraphError(
            f"cannot inject {n_add} inter-class edges, only {len(candidates)} available "
            f"(short by {n_add - len(candidates)})")
    injected = frozenset(rng.sample(candidates, n_add)) if n_add else frozenset()
    removed: frozenset[tuple[int, int]] = frozenset()
    if n_remove:
        intra = sorted(e for e in g.edges
                       if labels.get(e[0]) is not None
                       and labels.get(e[0]) == labels.get(e[1]))
        removed = frozenset(rng.sample(intra, min(n_remove, len(intra))))
    return PoisonedGraph(g.replace_edges((g.edges - removed) | injected),
                         injected, removed)


def sanitize(g_local: Graph, scores: dict[tuple[int, int], SimilarityReport],
             spec: DefenseSpec,
             injected: frozenset[tuple[int, int]] | None = None,
             ) -> tuple[Graph, SanitizationReport]:
    """Drop every local edge whose score is strictly below the threshold.

    ``scores`` must cover every edge of ``g_local``.  An edge scoring
    exactly at the threshold is kept.
    """
    removed = set()
    for edge in g_local.edges:
        report = scores.get(edge)
        if report is None:
            raise GraphError(f"missing similarity score for edge {edge}")
        if score_below(report, spec.metric, spec.threshold):
            removed.add(edge)
    cleaned = g_local.replace_edges(g_local.edges - removed)
    if injected is not None:
        local_injected = injected & g_local.edges
        removed_injected = len(removed & local_injected)
        clean_edges = g_local.edges - local_injected
        removed_clean = len(removed) - removed_injected
        tpr = removed_injected / len(local_injected) if local_injected else None
        fpr = removed_clean / len(clean_edges) if clean_edges else None
    else:
        removed_injected = 0
        removed_clean = len(removed)
        tpr = None
        fpr = len(removed) / g_local.num_edges if g_local.num_edges else None
    return cleaned, SanitizationReport(g_local.num_edges, len(removed),
                                       removed_injected, removed_clean, tpr, fpr)


@dataclass
class SeedOutcome:
    """Everything the experiment derives from one seed of the pipeline."""

    seed: int
    poisoned: dict[int, PoisonedGraph]
    union_scores: dict[tuple[int, int], SimilarityReport]
    local_scores: dict[int, dict[tuple[int, int], SimilarityReport]]
    rows: list[dict] = field(default_factory=list)


def _edge_scores_distributed(g1: Graph, g2: Graph, seed: int,
                             ) -> dict[tuple[int, int], SimilarityReport]:
    """Score every edge of either local graph on the union graph via the protocol."""
    edges = sorted(g1.edges | g2.edges)
    queries = [PairQuery(u, v) for u, v in edges]
    reports, _, _ = run_pairs(g1, g2, queries, mode="cached", seed=seed)
    return {(r.x, r.y): r for r in reports}


def _edge_scores_local(g: Graph) -> dict[tuple[int, int], SimilarityReport]:
    return {(u, v): oracle_scores(g, u, v) for u, v in g.edges}


def run_seed(source: Graph, ppt: float, rates: dict[int, float], seed: int,
             attack_mode: str = "add-only") -> SeedOutcome:
    """Partition, poison both sides, and score edges in both scopes."""
    part = partition_by_ppt(source, ppt, seed)
    locals_ = {1: part.g1, 2: part.g2}
    poisoned = {}
    for party, g in locals_.items():
        spec = AttackSpec(rates[party], attack_mode, seed * 10 + party)
        poisoned[party] = dice_attack(g, spec)
    union_scores = _edge_scores_distributed(poisoned[1].graph, poisoned[2].graph, seed)
    local_scores = {party: _edge_scores_local(p.graph) for party, p in poisoned.items()}
    return SeedOutcome(seed, poisoned, union_scores, local_scores)


def defense_experiment(source: Graph, ppt: float, r1: float, r2: float,
                       metric: str, thresholds, seeds,
                       attack_mode: str = "add-only") -> list[dict]:
    """Sweep thresholds over both parties and both scopes for each seed.

    Returns flat rows ready for CSV; each row carries the sanitization
    quality of one (seed, party, scope, threshold) cell.
    """
    rows = []
    for seed in seeds:
        outcome = run_seed(source, ppt, {1: r1, 2: r2}, seed, attack_mode)
        for party, poisoned in outcome.poisoned.items():
            for scope in ("local", "distributed"):
                scores = (outcome.local_scores[party] if scope == "local"
                          else outcome.union_scores)
                for t in thresholds:
                    spec = DefenseSpec(metric, t, scope)
                    _, report = sanitize(poisoned.graph, scores, spec, poisoned.injected)
                    rows.append({
                        "seed": seed, "ppt": ppt, "r1": r1, "r2": r2,
                        "metric": metric, "party": party, "scope": scope,
                        "threshold": t,
                        "edges_scored": report.edges_scored,
                        "edges_removed": report.edges_removed,
                        "removed_injected": report.removed_injected,
                        "tpr": report.tpr, "fpr": report.fpr,
                    })
    return rows


def experiment_row_csv(row: dict) -> str:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)
    keys = ("seed", "ppt", "r1", "r2", "metric", "party", "scope", "threshold",
            "edges_scored", "edges_removed", "removed_injected", "tpr", "fpr")
    return ",".join(fmt(row[k]) for k in keys)


def best_threshold_tpr(rows: list[dict], party: int, scope: str) -> float | None:
    """TPR at the swept threshold maximizing TPR - FPR for one party/scope."""
    cells = [r for r in rows
             if r["party"] == party and r["scope"] == scope and r["tpr"] is not None]
    if not cells:
        return None
    best = max(cells, key=lambda r: r["tpr"] - (r["fpr"] or 0.0))
    return best["tpr"]


def mean_scores_injected_vs_clean(outcome: SeedOutcome, party: int,
                                  metric: str) -> tuple[float, float]:
    """Mean union-graph score of injected vs clean edges of one party's graph."""
    poisoned = outcome.poisoned[party]
    injected = poisoned.injected & poisoned.graph.edges
    clean = poisoned.graph.edges - injected
    def mean(edges):
        vals = [score_value(outcome.union_scores[e], metric) for e in sorted(edges)]
        return statistics.fmean(vals) if vals else 0.0
    return mean(injected), mean(clean)
