"""Topic extraction from random-walk documents.

Each document is the sequence of vertices and relation labels visited by a
fixed-length simple random walk on the undirected projection of the graph.
Documents are TF-IDF weighted and factorized with nonnegative matrix
factorization; each column of the left factor is a topic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import KGError
from .graph import UndirectedGraph

_DENOM_EPS = 1e-12


@dataclass
class WalkDocument:
    tokens: list[str]
    start_vertex: str
    length: int

    @property
    def vertices(self) -> list[str]:
        return self.tokens[0::2]

    @property
    def edge_labels(self) -> list[str]:
        return self.tokens[1::2]


@dataclass
class Corpus:
    documents: list[WalkDocument] = field(default_factory=list)
    vocabulary: list[str] = field(default_factory=list)
    n: int = 0
    length: int = 0
    seed: int = 0

    def __len__(self) -> int:
        return len(self.documents)

    @classmethod
    def from_documents(cls, documents, n=None, length=0, seed=0) -> "Corpus":
        vocab: dict[str, None] = {}
        for doc in documents:
            for tok in doc.tokens:
                vocab.setdefault(tok, None)
        return cls(list(documents), list(vocab), len(documents) if n is None else n, length, seed)


@dataclass
class TopicModel:
    X: np.ndarray
    U: np.ndarray
    V: np.ndarray
    vocabulary: list[str]
    residuals: list[float]

    @property
    def r(self) -> int:
        return self.U.shape[1]


def random_walk(g: UndirectedGraph, start: int, steps: int, rng) -> WalkDocument:
    """Simple random walk of ``steps`` steps from vertex index ``start``.

    Each step moves to a uniformly chosen neighbour, then emits the predicate
    of a uniformly chosen fact supporting that edge.
    """
    if steps < 1:
        raise KGError("walk length must be at least 1")
    if g.degree(start) == 0:
        raise KGError(f"cannot start a walk at isolated vertex {g.vertices[start]!r}")
    tokens = [g.vertices[start]]
    current = start
    for _ in range(steps):
        neighbours = list(g.adjacency[current])
        nxt = neighbours[int(rng.integers(len(neighbours)))]
        support = g.adjacency[current][nxt]
        fact = support[int(rng.integers(len(support)))]
        tokens.append(fact.predicate)
        tokens.append(g.vertices[nxt])
        current = nxt
    return WalkDocument(tokens, g.vertices[start], steps)


def walk_starts(g: UndirectedGraph) -> list[int]:
    return [v for v in range(len(g)) if g.degree(v) > 0]


def generate_corpus(g: UndirectedGraph, n: int = 1000, length: int = 50, seed: int = 0) -> Corpus:
    """``n`` walk documents from uniformly chosen non-isolated start vertices.

    Document ``i`` draws all its randomness from ``(seed, i)``, so any subset
    of documents can be regenerated independently.
    """
    if n < 0:
        raise KGError("document count must be nonnegative")
    if n == 0:
        return Corpus(n=0, length=length, seed=seed)
    starts = walk_starts(g)
    if not starts:
        raise KGError("graph has no vertex with a neighbour to start a walk from")
    docs = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        start = starts[int(rng.integers(len(starts)))]
        docs.append(random_walk(g, start, length, rng))
    return Corpus.from_documents(docs, n=n, length=length, seed=seed)


def term_counts(corpus: Corpus) -> np.ndarray:
    index = {tok: i for i, tok in enumerate(corpus.vocabulary)}
    counts = np.zeros((len(corpus.vocabulary), len(corpus.documents)))
    for j, doc in enumerate(corpus.documents):
        for tok in doc.tokens:
            counts[index[tok], j] += 1
    return counts


def tfidf(corpus: Corpus) -> np.ndarray:
    """Vocabulary-by-document TF-IDF matrix with unit-norm columns.

    ``idf(t) = ln((1 + n) / (1 + df(t))) + 1``.
    """
    if not corpus.documents or not corpus.vocabulary:
        raise KGError("cannot vectorize an empty corpus")
    counts = term_counts(corpus)
    n = counts.shape[1]
    df = np.count_nonzero(counts, axis=1)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    X = counts * idf[:, None]
    norms = np.linalg.norm(X, axis=0)
    return X / np.where(norms > 0, norms, 1.0)


def nmf(
    X: np.ndarray, r: int = 25, iterations: int = 500, seed: int = 0, tol: float = 1e-6
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Frobenius NMF ``X ~ U V`` by multiplicative updates.

    Returns ``U``, ``V`` and the residual ``||X - UV||_F`` after each
    iteration.  Stops early once the relative change in residual drops
    below ``tol`` (pass ``tol=0`` to always run ``iterations`` steps).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise KGError("NMF input must be a matrix")
    if np.any(X < 0):
        raise KGError("NMF input has negative entries")
    m, n = X.shape
    if not 1 <= r <= min(m, n):
        raise KGError(f"rank {r} out of range for a {m}x{n} matrix")
    rng = np.random.default_rng(seed)
    U = 1.0 - rng.random((m, r))
    V = 1.0 - rng.random((r, n))
    residuals = []
    for _ in range(iterations):
        V *= (U.T @ X) / (U.T @ U @ V + _DENOM_EPS)
        U *= (X @ V.T) / (U @ (V @ V.T) + _DENOM_EPS)
        res = float(np.linalg.norm(X - U @ V))
        if residuals:
            prev = residuals[-1]
            residuals.append(res)
            if prev == 0.0 or abs(prev - res) / prev < tol:
                break
        else:
            residuals.append(res)
    return U, V, residuals


def fit_topics(corpus: Corpus, r: int = 25, iterations: int = 500, seed: int = 0) -> TopicModel:
    X = tfidf(corpus)
    U, V, residuals = nmf(X, r, iterations, seed)
    return TopicModel(X, U, V, list(corpus.vocabulary), residuals)


def top_terms(model: TopicModel, k: int) -> list[list[tuple[str, float]]]:
    """Heaviest ``k`` tokens of each topic, ties broken by vocabulary order."""
    m = model.U.shape[0]
    if not 1 <= k <= m:
        raise KGError(f"k={k} out of range 1..{m}")
    topics = []
    for j in range(model.U.shape[1]):
        column = model.U[:, j]
        order = np.argsort(-column, kind="stable")[:k]
        topics.append([(model.vocabulary[i], float(column[i])) for i in order])
    return topics


def vertex_document_counts(corpus: Corpus, g: UndirectedGraph) -> dict[str, int]:
    """Number of documents visiting each vertex of ``g`` (0 for unvisited ones)."""
    doc_count = dict.fromkeys(g.vertices, 0)
    for doc in corpus.documents:
        for v in set(doc.vertices):
            doc_count[v] += 1
    return doc_count


def coverage_stats(corpus: Corpus, g: UndirectedGraph) -> dict[str, float]:
    """Fraction of vertices visited by some document, and mean documents per vertex."""
    if len(g) == 0:
        raise KGError("coverage needs a nonempty graph")
    doc_count = vertex_document_counts(corpus, g)
    covered = sum(1 for c in doc_count.values() if c > 0)
    return {
        "coverage": covered / len(g),
        "mean_repetition": sum(doc_count.values()) / len(g),
    }


def format_corpus(corpus: Corpus) -> str:
    return "".join(" ".join(doc.tokens) + "\n" for doc in corpus.documents)


def parse_corpus(text: str) -> list[list[str]]:
    return [line.split() for line in text.splitlines() if line and not line.startswith("#")]


def format_topics(topics: list[list[tuple[str, float]]], header=None) -> str:
    out = io.StringIO()
    for line in header or []:
        out.write(f"# {line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["topic_id", "rank", "token", "weight"])
    for j, terms in enumerate(topics):
        for rank, (token, weight) in enumerate(terms, start=1):
            writer.writerow([j, rank, token, repr(weight)])
    return out.getvalue()
