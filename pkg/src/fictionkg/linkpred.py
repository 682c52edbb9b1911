"""Embedding-distance link prediction and rank-based evaluation."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .core import Fact, KGError, KnowledgeGraph
from .embedding import EmbeddingModel

HITS_AT = (1, 3, 10)


class SplitError(KGError):
    def __init__(self, message: str, achievable: float):
        self.achievable = achievable
        super().__init__(f"{message} (achievable train fraction: {achievable:.4f})")


@dataclass
class RankingResult:
    query: tuple
    ranked: list[tuple[str, float]]
    filtered: bool = False

    def labels(self) -> list[str]:
        return [label for label, _ in self.ranked]

    def rank_of(self, label: str) -> int:
        for position, (candidate, _) in enumerate(self.ranked, start=1):
            if candidate == label:
                return position
        raise KGError(f"{label!r} is not among the ranked candidates")


@dataclass
class EvalReport:
    hits_at: dict[int, float]
    mrr: float
    test_size: int
    filtered: bool
    ranks: list[int] = field(default_factory=list, repr=False)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(
    kg: KnowledgeGraph,
    train_fraction: float,
    seed: int = 0,
    facts: Optional[list[Fact]] = None,
    keep_in_train: Iterable[Fact] = (),
    require_coverage: bool = True,
) -> tuple[list[Fact], list[Fact]]:
    """Seeded random train/test split of ``facts`` (default: the asserted facts).

    Test facts are taken in shuffled order, skipping any whose removal would
    leave one of its entities or its relation absent from the training set.
    ``keep_in_train`` facts are never split but count towards that coverage;
    they are not included in the returned training list.
    Raises :class:`SplitError` when the requested test size cannot be met.
    With ``require_coverage=False`` the first shuffled facts go to test as-is.
    Both halves keep the input order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise KGError("train fraction must lie strictly between 0 and 1")
    facts = list(facts) if facts is not None else kg.asserted_facts()
    N = len(facts)
    n_test = N - _round_half_up(train_fraction * N)
    if n_test < 1:
        raise SplitError(f"{N} facts leave no test facts at this fraction", 1.0)

    entity_uses: Counter = Counter()
    relation_uses: Counter = Counter()
    for f in list(facts) + list(keep_in_train):
        entity_uses.update({f.subject, f.object})
        relation_uses[f.predicate] += 1

    rng = np.random.default_rng(seed)
    in_test = np.zeros(N, dtype=bool)
    taken = 0
    for idx in rng.permutation(N):
        if taken == n_test:
            break
        f = facts[idx]
        ends = {f.subject, f.object}
        covered = relation_uses[f.predicate] > 1 and all(entity_uses[e] > 1 for e in ends)
        if covered or not require_coverage:
            relation_uses[f.predicate] -= 1
            for e in ends:
                entity_uses[e] -= 1
            in_test[idx] = True
            taken += 1
    if taken < n_test:
        raise SplitError(
            f"only {taken} of {n_test} test facts keep every entity and relation in training",
            (N - taken) / N,
        )
    train = [f for f, t in zip(facts, in_test) if not t]
    test = [f for f, t in zip(facts, in_test) if t]
    return train, test


def typed_candidates(model: EmbeddingModel, kg: KnowledgeGraph, relation: str, position: str):
    """Entities compatible with the declared range (tail) or domain (head) of ``relation``."""
    info = kg.ontology.info(relation)
    wanted = info.range if position == "tail" else info.domain
    if not wanted:
        return list(model.entities)
    types = kg.ontology.entity_types
    return [e for e in model.entities if types.get(e) == wanted]


def _rank(model, query, fixed, r, candidates, filter_known, target, varying_tail) -> RankingResult:
    rel = model.relation(r)
    anchor = model.entity(fixed)
    candidates = list(model.entities) if candidates is None else list(candidates)
    if not candidates:
        raise KGError("candidate set is empty")
    idx = np.array([model.entity_index[c] if c in model.entity_index else -1 for c in candidates])
    if np.any(idx < 0):
        missing = candidates[int(np.argmax(idx < 0))]
        raise KGError(f"entity {missing!r} has no embedding")
    others = model.entity_vecs[idx]
    if varying_tail:
        scores = np.linalg.norm((anchor + rel) - others, axis=1)
    else:
        scores = np.linalg.norm((others + rel) - anchor, axis=1)
    keep = np.ones(len(candidates), dtype=bool)
    if filter_known is not None:
        for i, c in enumerate(candidates):
            if c == target:
                continue
            triple = (fixed, r, c) if varying_tail else (c, r, fixed)
            if triple in filter_known:
                keep[i] = False
    label_order = {c: i for i, c in enumerate(sorted(candidates))}
    tiebreak = np.array([label_order[c] for c in candidates])
    order = np.lexsort((tiebreak, scores))
    ranked = [(candidates[i], float(scores[i])) for i in order if keep[i]]
    return RankingResult(query, ranked, filter_known is not None)


def _known_set(known) -> Optional[set]:
    if known is None:
        return None
    if isinstance(known, (set, frozenset)):
        return known
    return {f.key if isinstance(f, Fact) else tuple(f) for f in known}


def rank_tails(
    model: EmbeddingModel,
    s: str,
    r: str,
    candidates: Optional[Iterable[str]] = None,
    filter_known=None,
    target: Optional[str] = None,
) -> RankingResult:
    """Candidates ``o`` for ``(s, r, ?)`` by ascending ``||u_s + u_r - u_o||``.

    Ties go to the lexicographically smaller label.  With ``filter_known``,
    known tails other than ``target`` are dropped.
    """
    return _rank(model, (s, r, None), s, r, candidates, _known_set(filter_known), target, True)


def rank_heads(
    model: EmbeddingModel,
    r: str,
    o: str,
    candidates: Optional[Iterable[str]] = None,
    filter_known=None,
    target: Optional[str] = None,
) -> RankingResult:
    return _rank(model, (None, r, o), o, r, candidates, _known_set(filter_known), target, False)


def evaluate(
    model: EmbeddingModel,
    test: list[Fact],
    all_known: Iterable,
    filtered: bool = True,
) -> EvalReport:
    """Hits@{1,3,10} and MRR over head and tail queries of every test fact."""
    if not test:
        raise KGError("empty test set")
    model.triple_indices(test)  # names the first unembedded identifier
    known = _known_set(all_known) if filtered else None
    ranks = []
    for f in test:
        tails = rank_tails(model, f.subject, f.predicate, filter_known=known, target=f.object)
        heads = rank_heads(model, f.predicate, f.object, filter_known=known, target=f.subject)
        ranks += [tails.rank_of(f.object), heads.rank_of(f.subject)]
    arr = np.array(ranks, dtype=float)
    return EvalReport(
        hits_at={k: float(np.mean(arr <= k)) for k in HITS_AT},
        mrr=float(np.mean(1.0 / arr)),
        test_size=len(test),
        filtered=filtered,
        ranks=ranks,
    )


def median_known_score(model: EmbeddingModel, known: Iterable) -> float:
    triples = model.triple_indices([f.key if isinstance(f, Fact) else f for f in known])
    if len(triples) == 0:
        raise KGError("no known facts to derive a threshold from")
    resid = (
        model.entity_vecs[triples[:, 0]]
        + model.relation_vecs[triples[:, 1]]
        - model.entity_vecs[triples[:, 2]]
    )
    return float(np.median(np.linalg.norm(resid, axis=1)))


def predict_flag(
    model: EmbeddingModel,
    s: str,
    r: str,
    o: str,
    threshold: Optional[float] = None,
    known: Optional[Iterable] = None,
) -> dict:
    """Score a triple and flag it plausible when the score is at most the threshold.

    Without an explicit threshold, the median score of ``known`` is used.
    """
    score = float(np.linalg.norm(model.entity(s) + model.relation(r) - model.entity(o)))
    if threshold is None:
        if known is None:
            raise KGError("need a threshold or known facts to derive one")
        threshold = median_known_score(model, known)
    return {"score": score, "threshold": threshold, "plausible": score <= threshold}


def format_report(report: EvalReport) -> str:
    protocol = "filtered" if report.filtered else "raw"
    lines = [f"protocol  {protocol}", f"test      {report.test_size}"]
    lines += [f"hits@{k:<4} {report.hits_at[k]:.4f}" for k in HITS_AT]
    lines.append(f"mrr       {report.mrr:.4f}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport, header=None) -> str:
    out = io.StringIO()
    for line in header or []:
        out.write(f"# {line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["metric", "value"])
    for k in HITS_AT:
        writer.writerow([f"hits@{k}", repr(report.hits_at[k])])
    writer.writerow(["mrr", repr(report.mrr)])
    writer.writerow(["test_size", report.test_size])
    writer.writerow(["filtered", str(report.filtered).lower()])
    return out.getvalue()
