"""Independent retrieval-metric oracle, pure python.

Everything here is written straight from the metric definitions with no
shared code or numpy: ranking by sorted() on (distance, id) pairs, hit
counting by explicit loops, and exact rationals via fractions.Fraction next
to the float-accumulation variants the production code is expected to
reproduce bit for bit.
"""

import math
from fractions import Fraction


def oracle_recall_at_k(relevance, k):
    """1.0 if any of the first k ranked items is relevant."""
    return 1.0 if any(relevance[:k]) else 0.0


def oracle_r_precision(relevance):
    R = sum(1 for r in relevance if r)
    if R == 0:
        return None
    return sum(1 for r in relevance[:R] if r) / R


def oracle_r_precision_exact(relevance):
    R = sum(1 for r in relevance if r)
    if R == 0:
        return None
    return Fraction(sum(1 for r in relevance[:R] if r), R)


def oracle_map_at_r(relevance):
    """Float accumulation in rank order: sum of hits/(rank) over relevant
    ranks within the top R, divided by R at the end."""
    R = sum(1 for r in relevance if r)
    if R == 0:
        return None
    hits = 0
    total = 0.0
    for i in range(R):
        if relevance[i]:
            hits += 1
            total += hits / (i + 1)
    return total / R


def oracle_map_at_r_exact(relevance):
    R = sum(1 for r in relevance if r)
    if R == 0:
        return None
    hits = 0
    total = Fraction(0)
    for i in range(R):
        if relevance[i]:
            hits += 1
            total += Fraction(hits, i + 1)
    return total / R


def oracle_rank(query_vec, gallery, ids):
    """Gallery order by ascending euclidean distance, ties by ascending id."""
    keyed = []
    for vec, sid in zip(gallery, ids):
        d = math.sqrt(sum((a - b) ** 2 for a, b in zip(query_vec, vec)))
        keyed.append((d, sid, vec))
    keyed.sort(key=lambda t: (t[0], t[1]))
    return [sid for _d, sid, _v in keyed]


def oracle_leave_one_out(vectors, labels, ids, recall_ks=(1, 2)):
    """Per-query (recalls, rp, map) plus domain means, all pure python.

    Queries with no same-class gallery item are skipped for RP/MAP but kept
    in the recall means, mirroring the reporting contract.
    """
    n = len(vectors)
    per_query = []
    recall_sums = {k: 0.0 for k in recall_ks}
    rp_vals = []
    map_vals = []
    skipped = 0
    for q in range(n):
        gallery = [vectors[i] for i in range(n) if i != q]
        g_ids = [ids[i] for i in range(n) if i != q]
        g_labels = {ids[i]: labels[i] for i in range(n)}
        ranked = oracle_rank(vectors[q], gallery, g_ids)
        relevance = [g_labels[sid] == labels[q] for sid in ranked]
        recalls = {k: oracle_recall_at_k(relevance, k) for k in recall_ks}
        for k in recall_ks:
            recall_sums[k] += recalls[k]
        rp = oracle_r_precision(relevance)
        mp = oracle_map_at_r(relevance)
        if rp is None:
            skipped += 1
        else:
            rp_vals.append(rp)
            map_vals.append(mp)
        per_query.append((ids[q], recalls, rp, mp))
    means = {
        "recall_at": {k: recall_sums[k] / n for k in recall_ks},
        "r_precision": sum(rp_vals) / len(rp_vals) if rp_vals else 0.0,
        "map_at_r": sum(map_vals) / len(map_vals) if map_vals else 0.0,
        "queries": n,
        "skipped_zero_relevant": skipped,
    }
    return per_query, means
