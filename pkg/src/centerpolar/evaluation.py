"""Leave-one-out retrieval evaluation.

Metrics follow the standard definitions: Recall@k is the per-query hit
indicator within the top k averaged over queries; with R the number of
same-class gallery items, R-Precision is r/R for r hits in the top R, and
MAP@R averages precision-at-i over the relevant positions i <= R (counting
missed ones as zero). Queries with R = 0 are excluded from the R-based
aggregates and reported.

Ranking is by ascending Euclidean distance with ties broken by ascending
sample id; an angular variant is available via metric="geodesic".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DataSet
from .geometry import EPS_PROJECTION, DegenerateVectorError

METRICS = ("euclidean", "geodesic")


@dataclass(frozen=True)
class DomainMetrics:
    recall_at: dict
    r_precision: float
    map_at_r: float
    queries: int
    skipped_zero_relevant: int

    def to_dict(self) -> dict:
        return {
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "r_precision": self.r_precision,
            "map_at_r": self.map_at_r,
            "queries": self.queries,
            "skipped_zero_relevant": self.skipped_zero_relevant,
        }


@dataclass(frozen=True)
class RetrievalReport:
    domains: dict
    average: DomainMetrics
    query_count: int
    metric: str

    def to_dict(self) -> dict:
        return {
            "domains": {name: m.to_dict() for name, m in self.domains.items()},
            "average": self.average.to_dict(),
            "query_count": self.query_count,
            "metric": self.metric,
        }

    def to_text(self) -> str:
        ks = sorted(next(iter(self.domains.values())).recall_at) if self.domains else []
        headers = ["domain"] + [f"R@{k}" for k in ks] + ["RP", "MAP"]
        rows = []
        for name, m in self.domains.items():
            rows.append(
                [name]
                + [f"{m.recall_at[k]:.4f}" for k in ks]
                + [f"{m.r_precision:.4f}", f"{m.map_at_r:.4f}"]
            )
        m = self.average
        rows.append(
            ["average"]
            + [f"{m.recall_at[k]:.4f}" for k in ks]
            + [f"{m.r_precision:.4f}", f"{m.map_at_r:.4f}"]
        )
        widths = [
            max(len(headers[c]), *(len(r[c]) for r in rows)) for c in range(len(headers))
        ]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        for r in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
        return "\n".join(lines) + "\n"


def rank_neighbors(query_embed, gallery_embeds, gallery_ids=None) -> np.ndarray:
    """Indices of gallery rows by ascending Euclidean distance to the query.

    Ties are broken by ascending sample id so the ranking is deterministic
    under any gallery permutation.
    """
    q = np.asarray(query_embed, dtype=np.float64).reshape(-1)
    G = np.asarray(gallery_embeds, dtype=np.float64)
    if G.ndim != 2 or G.shape[1] != q.shape[0]:
        raise ValueError(
            f"rank_neighbors: gallery shape {G.shape} does not match query dim {q.shape[0]}"
        )
    if gallery_ids is None:
        gallery_ids = np.arange(G.shape[0])
    ids = np.asarray(gallery_ids)
    diffs = G - q
    dists = np.sqrt((diffs * diffs).sum(axis=1))
    return np.lexsort((ids, dists))


def recall_at_k(ranked_labels, query_label, k: int) -> float:
    ranked_labels = np.asarray(ranked_labels)
    if k < 1 or k > ranked_labels.shape[0]:
        raise ValueError(
            f"recall_at_k: k={k} outside [1, {ranked_labels.shape[0]}]"
        )
    return 1.0 if (ranked_labels[:k] == query_label).any() else 0.0


def r_precision(ranked_labels, query_label, R: int) -> float:
    ranked_labels = np.asarray(ranked_labels)
    if R < 1 or R > ranked_labels.shape[0]:
        raise ValueError(f"r_precision: R={R} outside [1, {ranked_labels.shape[0]}]")
    r = int((ranked_labels[:R] == query_label).sum())
    return r / R


def map_at_r(ranked_labels, query_label, R: int) -> float:
    ranked_labels = np.asarray(ranked_labels)
    if R < 1 or R > ranked_labels.shape[0]:
        raise ValueError(f"map_at_r: R={R} outside [1, {ranked_labels.shape[0]}]")
    hits = 0
    total = 0.0
    for i in range(R):
        if ranked_labels[i] == query_label:
            hits += 1
            total += hits / (i + 1)
    return total / R


def evaluate(model, tests: dict, recall_ks=(1, 2), metric: str = "euclidean") -> RetrievalReport:
    """Leave-one-out retrieval over each test domain, averaged across domains."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    if not tests:
        raise ValueError("evaluate: no test sets given")
    recall_ks = tuple(sorted(set(int(k) for k in recall_ks)))
    domains: dict[str, DomainMetrics] = {}
    for name, ds in tests.items():
        domains[name] = _evaluate_domain(model, ds, recall_ks, metric)
    avg = DomainMetrics(
        recall_at={
            k: _mean([m.recall_at[k] for m in domains.values()]) for k in recall_ks
        },
        r_precision=_mean([m.r_precision for m in domains.values()]),
        map_at_r=_mean([m.map_at_r for m in domains.values()]),
        queries=sum(m.queries for m in domains.values()),
        skipped_zero_relevant=sum(m.skipped_zero_relevant for m in domains.values()),
    )
    return RetrievalReport(
        domains=domains,
        average=avg,
        query_count=sum(m.queries for m in domains.values()),
        metric=metric,
    )


def _evaluate_domain(model, ds: DataSet, recall_ks, metric: str) -> DomainMetrics:
    n = len(ds)
    if n < 2:
        raise ValueError(f"evaluate: domain needs at least 2 samples, got {n}")
    if max(recall_ks) > n - 1:
        raise ValueError(
            f"evaluate: recall k={max(recall_ks)} exceeds gallery size {n - 1}"
        )
    E = model.embed_many(ds.features_matrix())
    ids = ds.ids()
    labels = ds.labels()
    D = _distance_matrix(E, ids, metric)
    keep = np.ones(n, dtype=bool)
    recall_sums = {k: 0.0 for k in recall_ks}
    rp_values = []
    map_values = []
    skipped = 0
    for i in range(n):
        keep[i] = False  # leave the query (by id: ids are unique) out
        row = D[i][keep]
        rest_ids = ids[keep]
        rest_labels = labels[keep]
        keep[i] = True
        order = np.lexsort((rest_ids, row))
        ranked = rest_labels[order]
        for k in recall_ks:
            recall_sums[k] += recall_at_k(ranked, labels[i], k)
        R = int((rest_labels == labels[i]).sum())
        if R == 0:
            skipped += 1
            continue
        rp_values.append(r_precision(ranked, labels[i], R))
        map_values.append(map_at_r(ranked, labels[i], R))
    return DomainMetrics(
        recall_at={k: recall_sums[k] / n for k in recall_ks},
        r_precision=_mean(rp_values) if rp_values else 0.0,
        map_at_r=_mean(map_values) if map_values else 0.0,
        queries=n,
        skipped_zero_relevant=skipped,
    )


def _distance_matrix(E: np.ndarray, ids: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        sq = (E * E).sum(axis=1)
        D = sq[:, None] + sq[None, :] - 2.0 * (E @ E.T)
        np.maximum(D, 0.0, out=D)
        return np.sqrt(D)
    norms = np.sqrt((E * E).sum(axis=1))
    bad = np.nonzero(norms <= EPS_PROJECTION)[0]
    if bad.size:
        raise DegenerateVectorError(
            f"geodesic ranking: embedding of sample {int(ids[bad[0]])} has near-zero norm"
        )
    U = E / norms[:, None]
    C = np.clip(U @ U.T, -1.0, 1.0)
    return np.arccos(C) / math.pi


def _mean(values) -> float:
    return sum(values) / len(values)
