"""Translational (TransE) embedding of a knowledge graph.

Every entity and relation gets a vector; a triple ``(s, r, o)`` is scored by
the residual norm ``||u_s + u_r - u_o||_2`` (lower is more plausible).
Training is seeded mini-batch SGD over (positive, corrupted) pairs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .core import Fact, KGError, KnowledgeGraph

HINGE = "hinge"
PAPER_LITERAL = "paper_literal"

_MAX_CORRUPTION_TRIES = 100


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    margin: float = 1.0
    batch_size: int = 32
    negative_per_positive: int = 5
    seed: int = 0
    loss_variant: str = HINGE
    include_derived: bool = False

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "negative_per_positive"):
            if getattr(self, name) < 1:
                raise KGError(f"{name} must be a positive integer")
        if self.learning_rate < 0:
            raise KGError("learning_rate must be nonnegative")
        if self.margin < 0:
            raise KGError("margin must be nonnegative")
        if self.loss_variant not in (HINGE, PAPER_LITERAL):
            raise KGError(f"unknown loss variant {self.loss_variant!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        """Build from string values, e.g. parsed from a key=value file."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise KGError(f"unknown training option {key!r}")
            kind = types[key]
            if kind == "bool":
                kwargs[key] = str(raw).strip().lower() in ("1", "true", "yes", "on")
            elif kind == "int":
                kwargs[key] = int(raw)
            elif kind == "float":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw).strip()
        return cls(**kwargs)

    def as_dict(self) -> dict:
        return asdict(self)


def parse_config_file(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KGError(f"expected key=value, got {line!r}", lineno)
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


@dataclass
class EmbeddingModel:
    entities: list[str]
    relations: list[str]
    entity_vecs: np.ndarray
    relation_vecs: np.ndarray
    config: Optional[TrainConfig] = None
    entity_index: dict[str, int] = field(init=False, repr=False)
    relation_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}

    @property
    def dim(self) -> int:
        return self.entity_vecs.shape[1]

    def entity(self, label: str) -> np.ndarray:
        try:
            return self.entity_vecs[self.entity_index[label]]
        except KeyError:
            raise KGError(f"entity {label!r} has no embedding") from None

    def relation(self, label: str) -> np.ndarray:
        try:
            return self.relation_vecs[self.relation_index[label]]
        except KeyError:
            raise KGError(f"relation {label!r} has no embedding") from None

    def triple_indices(self, facts) -> np.ndarray:
        out = np.empty((len(facts), 3), dtype=np.int64)
        for i, f in enumerate(facts):
            s, r, o = f.key if isinstance(f, Fact) else f
            try:
                out[i] = (self.entity_index[s], self.relation_index[r], self.entity_index[o])
            except KeyError as exc:
                raise KGError(f"{exc.args[0]!r} in {tuple((s, r, o))} has no embedding") from None
        return out

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            list(self.entities),
            list(self.relations),
            self.entity_vecs.copy(),
            self.relation_vecs.copy(),
            self.config,
        )


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def init_model(kg: KnowledgeGraph, dim: int = 200, seed: int = 0) -> EmbeddingModel:
    """Uniform init on [-6/sqrt(dim), 6/sqrt(dim)]; entity vectors projected to unit norm."""
    if dim < 1:
        raise KGError("embedding dimension must be positive")
    if not kg.entities:
        raise KGError("cannot embed an empty graph")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(len(kg.entities), dim))
    rel = rng.uniform(-bound, bound, size=(len(kg.relations), dim))
    return EmbeddingModel(kg.entities, kg.relations, _normalize_rows(ent), rel)


def score_triple(model: EmbeddingModel, s: str, r: str, o: str) -> float:
    return float(np.linalg.norm(model.entity(s) + model.relation(r) - model.entity(o)))


def score_indices(ent: np.ndarray, rel: np.ndarray, triples: np.ndarray) -> np.ndarray:
    resid = ent[triples[:, 0]] + rel[triples[:, 1]] - ent[triples[:, 2]]
    return np.linalg.norm(resid, axis=1)


def _corrupt(h, r, t, n_entities, known, rng) -> tuple[int, int, int]:
    head = rng.random() < 0.5
    for _ in range(_MAX_CORRUPTION_TRIES):
        current = h if head else t
        pick = int(rng.integers(n_entities - 1))
        if pick >= current:
            pick += 1
        cand = (pick, r, t) if head else (h, r, pick)
        if cand not in known:
            return cand
    return cand


def negative_sample(fact: Fact, kg: KnowledgeGraph, rng) -> Fact:
    """Replace head or tail (fair coin) with a different entity, avoiding known triples."""
    entities = kg.entities
    if len(entities) < 2:
        raise KGError("negative sampling needs at least two entities")
    index = {e: i for i, e in enumerate(entities)}
    known = {(index[s], p, index[o]) for s, p, o in kg.triple_set()}
    h, t = index[fact.subject], index[fact.object]
    ch, _, ct = _corrupt(h, fact.predicate, t, len(entities), known, rng)
    return Fact(entities[ch], fact.predicate, entities[ct])


def loss_and_grad(
    ent: np.ndarray,
    rel: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    margin: float = 1.0,
    variant: str = HINGE,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Summed pair loss and its gradient w.r.t. entity and relation matrices.

    ``pos`` and ``neg`` are aligned ``(k, 3)`` index arrays.
    """
    e_pos = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    e_neg = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
    d_pos = np.linalg.norm(e_pos, axis=1)
    d_neg = np.linalg.norm(e_neg, axis=1)
    if variant == HINGE:
        raw = margin + d_pos - d_neg
        active = raw > 0
        loss = float(np.sum(raw[active]))
    elif variant == PAPER_LITERAL:
        active = np.ones(len(pos), dtype=bool)
        loss = float(np.sum(d_pos - d_neg))
    else:
        raise KGError(f"unknown loss variant {variant!r}")

    w = active[:, None].astype(float)
    g_pos = w * e_pos / np.maximum(d_pos, 1e-300)[:, None]
    g_neg = w * e_neg / np.maximum(d_neg, 1e-300)[:, None]
    grad_ent = np.zeros_like(ent)
    grad_rel = np.zeros_like(rel)
    np.add.at(grad_ent, pos[:, 0], g_pos)
    np.add.at(grad_ent, pos[:, 2], -g_pos)
    np.add.at(grad_rel, pos[:, 1], g_pos)
    np.add.at(grad_ent, neg[:, 0], -g_neg)
    np.add.at(grad_ent, neg[:, 2], g_neg)
    np.add.at(grad_rel, neg[:, 1], -g_neg)
    return loss, grad_ent, grad_rel


def _draw_negatives(pos, n_entities, known, rng) -> np.ndarray:
    return np.array(
        [_corrupt(int(h), int(r), int(t), n_entities, known, rng) for h, r, t in pos],
        dtype=np.int64,
    ).reshape(-1, 3)


def train(
    model: EmbeddingModel, kg: KnowledgeGraph, config: TrainConfig, facts=None
) -> tuple[EmbeddingModel, list[float]]:
    """Run ``config.epochs`` passes of mini-batch SGD on a copy of ``model``.

    ``facts`` overrides the positive set (e.g. a training split); by default the
    graph's asserted facts are used.  Corruptions avoid every triple of ``kg``.

    The returned history holds, per epoch, the mean pair loss on a fixed
    monitoring set (each positive paired with corruptions drawn once up
    front), so epochs are comparable and the curve is flat when nothing moves.
    """
    config.validate()
    positives = facts if facts is not None else kg.training_facts(config.include_derived)
    if not positives:
        raise KGError("no facts to train on")
    model = model.copy()
    model.config = config
    n_ent = len(model.entities)
    if n_ent < 2:
        raise KGError("training needs at least two entities")
    pos_all = model.triple_indices(positives)
    known = {tuple(t) for t in model.triple_indices(
        [k for k in kg.triple_set() if k[0] in model.entity_index
         and k[2] in model.entity_index and k[1] in model.relation_index]
    ).tolist()}
    known |= {tuple(t) for t in pos_all.tolist()}

    k = config.negative_per_positive
    train_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    monitor_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    monitor_pos = np.repeat(pos_all, k, axis=0)
    monitor_neg = _draw_negatives(monitor_pos, n_ent, known, monitor_rng)

    ent, rel = model.entity_vecs, model.relation_vecs
    history = []
    for _ in range(config.epochs):
        order = train_rng.permutation(len(pos_all))
        for start in range(0, len(order), config.batch_size):
            batch = np.repeat(pos_all[order[start:start + config.batch_size]], k, axis=0)
            neg = _draw_negatives(batch, n_ent, known, train_rng)
            _, g_ent, g_rel = loss_and_grad(
                ent, rel, batch, neg, config.margin, config.loss_variant
            )
            ent -= config.learning_rate * g_ent
            rel -= config.learning_rate * g_rel
        ent[:] = _normalize_rows(ent)
        loss, _, _ = loss_and_grad(
            ent, rel, monitor_pos, monitor_neg, config.margin, config.loss_variant
        )
        history.append(loss / len(monitor_pos))
    return model, history


def export_embedding_csv(
    model: EmbeddingModel,
    projection: Optional[np.ndarray] = None,
    include_relations: bool = True,
    header: Optional[list[str]] = None,
) -> str:
    """CSV of raw vectors (``label,kind,c1..cdim``) or of 2D points (``label,kind,x,y``).

    Rows are entities then (optionally) relations, in model order.  When a
    projection is given, its rows must line up with those labels.
    """
    rows = [(e, "entity") for e in model.entities]
    if include_relations:
        rows += [(r, "relation") for r in model.relations]
    if projection is None:
        values = model.entity_vecs
        if include_relations:
            values = np.vstack([values, model.relation_vecs])
        columns = [f"c{i + 1}" for i in range(model.dim)]
    else:
        values = np.asarray(projection, dtype=float)
        if values.shape != (len(rows), 2):
            raise KGError(f"projection shape {values.shape} does not match {len(rows)} rows")
        columns = ["x", "y"]
    out = io.StringIO()
    for line in header or []:
        out.write(f"# {line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["label", "kind"] + columns)
    for (label, kind), vec in zip(rows, values):
        writer.writerow([label, kind] + [repr(float(x)) for x in vec])
    return out.getvalue()


def parse_embedding_csv(text: str) -> EmbeddingModel:
    """Inverse of :func:`export_embedding_csv` for raw exports."""
    lines = [line for line in text.splitlines() if line and not line.startswith("#")]
    reader = csv.reader(lines)
    head = next(reader, None)
    if head is None or head[:2] != ["label", "kind"]:
        raise KGError("embedding CSV must start with a label,kind header")
    entities, relations, ent_rows, rel_rows = [], [], [], []
    for row in reader:
        label, kind, *coords = row
        vec = [float(x) for x in coords]
        if kind == "entity":
            entities.append(label)
            ent_rows.append(vec)
        elif kind == "relation":
            relations.append(label)
            rel_rows.append(vec)
        else:
            raise KGError(f"unknown row kind {kind!r}")
    dim = len(head) - 2
    return EmbeddingModel(
        entities,
        relations,
        np.array(ent_rows, dtype=float).reshape(-1, dim),
        np.array(rel_rows, dtype=float).reshape(-1, dim),
    )
