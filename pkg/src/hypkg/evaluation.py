"""Filtered link-prediction metrics (MRR, Hits@K), aggregate and per relation."""

import json
from dataclasses import dataclass, field

import numpy as np

from hypkg.errors import DomainError
from hypkg.model import score_all_tails

HITS_AT = (1, 3, 10)


def rank_from_scores(scores, target, filtered=()):
    """Mid-rank of ``target`` among ``scores`` after dropping ``filtered`` ids.

    rank = 1 + #(score > s_target) + floor(#(score == s_target) / 2), counted
    over candidates other than the target itself.
    """
    keep = np.ones(len(scores), dtype=bool)
    keep[np.asarray(filtered, dtype=np.int64)] = False
    keep[target] = False
    s_t = scores[target]
    cand = scores[keep]
    return 1 + int(np.sum(cand > s_t)) + int(np.sum(cand == s_t)) // 2


def filtered_rank(params, triple, filter_index):
    """Filtered rank of the tail of (h, r, t) against every entity."""
    h, r, t = (int(x) for x in triple)
    if not (0 <= t < params.n_entities):
        raise DomainError(f"tail id {t} out of range")
    scores = score_all_tails(params, h, r)
    known = filter_index.get((h, r), ()) if filter_index is not None else ()
    return rank_from_scores(scores, t, known)


def _metrics(ranks):
    ranks = np.asarray(ranks, dtype=np.float64)
    if not len(ranks):
        return float("nan"), {k: float("nan") for k in HITS_AT}
    return float(np.mean(1.0 / ranks)), {k: float(np.mean(ranks <= k)) for k in HITS_AT}


@dataclass
class EvalReport:
    mrr: float
    hits: dict
    n_queries: int
    per_relation: dict = field(default_factory=dict)
    ranks: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_ranks(cls, ranks, relations):
        ranks = np.asarray(ranks)
        relations = np.asarray(relations)
        mrr, hits = _metrics(ranks)
        per = {}
        for rel in np.unique(relations):
            sel = ranks[relations == rel]
            m, h = _metrics(sel)
            per[int(rel)] = {"mrr": m, "hits": h, "count": int(len(sel))}
        return cls(mrr=mrr, hits=hits, n_queries=int(len(ranks)), per_relation=per, ranks=ranks)

    def to_dict(self, relation_names=None):
        def name(r):
            return relation_names[r] if relation_names is not None else str(r)

        return {
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in self.hits.items()},
            "n_queries": self.n_queries,
            "per_relation": {
                name(r): {"mrr": v["mrr"], "hits": {str(k): x for k, x in v["hits"].items()}, "count": v["count"]}
                for r, v in self.per_relation.items()
            },
        }

    def to_json(self, relation_names=None):
        return json.dumps(self.to_dict(relation_names), indent=2, sort_keys=True)

    def to_tsv(self, relation_names=None, per_relation=True):
        header = "relation\tcount\tmrr\t" + "\t".join(f"hits@{k}" for k in HITS_AT)
        rows = [header]

        def row(label, count, mrr, hits):
            return f"{label}\t{count}\t{mrr:.4f}\t" + "\t".join(f"{hits[k]:.4f}" for k in HITS_AT)

        if per_relation:
            for r, v in self.per_relation.items():
                label = relation_names[r] if relation_names is not None else str(r)
                rows.append(row(label, v["count"], v["mrr"], v["hits"]))
        rows.append(row("ALL", self.n_queries, self.mrr, self.hits))
        return "\n".join(rows) + "\n"


def query_ranks(params, queries, filter_index, batch_size=256):
    """Filtered ranks for (h, r, t) tail queries; ``filter_index=None`` ranks raw."""
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, 3)
    params.check_ids(entities=[queries[:, 0], queries[:, 2]], relations=[queries[:, 1]])
    ranks = np.empty(len(queries), dtype=np.int64)
    for start in range(0, len(queries), batch_size):
        chunk = queries[start : start + batch_size]
        scores = score_all_tails(params, chunk[:, 0], chunk[:, 1])
        for i, (h, r, t) in enumerate(chunk):
            known = filter_index.get((int(h), int(r)), ()) if filter_index is not None else ()
            ranks[start + i] = rank_from_scores(scores[i], int(t), known)
    return ranks


def evaluate(params, triples, filter_index, n_base_relations, batch_size=256):
    """Both-direction filtered evaluation of raw (un-augmented) triples.

    Each (h, r, t) yields the tail query (h, r, ?) and the head query
    (t, r_inv, ?). Per-relation results are keyed on the base relation id.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) and triples[:, 1].max() >= n_base_relations:
        raise DomainError("evaluate expects un-augmented triples")
    heads = np.stack([triples[:, 2], triples[:, 1] + n_base_relations, triples[:, 0]], axis=1)
    queries = np.concatenate([triples, heads])
    ranks = query_ranks(params, queries, filter_index, batch_size)
    return EvalReport.from_ranks(ranks, queries[:, 1] % n_base_relations)
