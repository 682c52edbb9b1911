"""Knowledge graph data model: ingestion, ontology closure, reification, export.

A graph holds entities, relations and a deduplicated set of facts
``(subject, predicate, object)`` with optional episode/timestamp/provenance
annotations.  Facts produced by ontology closure are flagged as derived.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

logger = logging.getLogger(__name__)

IDENT_RE = re.compile(r"^[A-Za-z0-9_'’.\-]+$")

FACT_HEADER = ("subject", "predicate", "object", "episode", "timestamp", "revealed_by")

# Reification vocabulary; always accepted, even in strict mode.
RDF_SUBJECT = "rdf_subject"
RDF_PREDICATE = "rdf_predicate_is"
RDF_OBJECT = "rdf_object"
OCCURS_AT = "occurs_at"
REVEALED_BY = "revealed_by"
RESERVED_RELATIONS = (RDF_SUBJECT, RDF_PREDICATE, RDF_OBJECT, OCCURS_AT, REVEALED_BY)

STRICT = "strict"
PERMISSIVE = "permissive"

ARCHIVE_MAGIC = "# fictionkg graph archive v1"


class KGError(ValueError):
    """Base class for validation errors; carries an optional line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OntologyError(KGError):
    pass


class FactFormatError(KGError):
    pass


class ValidationError(KGError):
    pass


def normalize_identifier(raw: str) -> str:
    """Trim and underscore-join an identifier; raise if illegal characters remain."""
    label = "_".join(raw.strip().split())
    if not label:
        raise FactFormatError("empty identifier")
    if not IDENT_RE.match(label):
        raise FactFormatError(f"illegal characters in identifier {label!r}")
    return label


@dataclass(frozen=True)
class Fact:
    subject: str
    predicate: str
    object: str
    episode: Optional[int] = None
    timestamp: Optional[int] = None
    revealed_by: Optional[str] = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)

    def __str__(self) -> str:
        return f"({self.subject}, {self.predicate}, {self.object})"


@dataclass
class RelationInfo:
    symmetric: bool = False
    inverse: Optional[str] = None
    domain: Optional[str] = None
    range: Optional[str] = None


@dataclass
class Ontology:
    relations: dict[str, RelationInfo] = field(default_factory=dict)
    entity_types: dict[str, str] = field(default_factory=dict)

    def __contains__(self, relation: str) -> bool:
        return relation in self.relations

    def info(self, relation: str) -> RelationInfo:
        return self.relations.get(relation, RelationInfo())

    def declare(self, name: str) -> RelationInfo:
        return self.relations.setdefault(name, RelationInfo())

    def set_symmetric(self, name: str, line: Optional[int] = None) -> None:
        info = self.declare(name)
        if info.inverse is not None and info.inverse != name:
            raise OntologyError(
                f"relation {name} declared symmetric but paired with inverse {info.inverse}", line
            )
        info.symmetric = True
        info.inverse = None

    def set_inverse(self, name: str, other: str, line: Optional[int] = None) -> None:
        if name == other:
            # self-inverse is symmetry
            self.set_symmetric(name, line)
            return
        a, b = self.declare(name), self.declare(other)
        for rel, info in ((name, a), (other, b)):
            if info.symmetric:
                raise OntologyError(
                    f"relation {rel} is symmetric and cannot take a distinct inverse", line
                )
        if a.inverse not in (None, other):
            raise OntologyError(f"{name} is already paired with inverse {a.inverse}", line)
        if b.inverse not in (None, name):
            raise OntologyError(f"{other} is already paired with inverse {b.inverse}", line)
        a.inverse, b.inverse = other, name

    def copy(self) -> "Ontology":
        return Ontology(
            {k: dataclasses.replace(v) for k, v in self.relations.items()},
            dict(self.entity_types),
        )


def parse_ontology(text: str) -> Ontology:
    """Parse line-based ontology declarations.

    Grammar (``#`` starts a comment)::

        relation <name>
        relation <name> symmetric
        relation <name> inverse <name>
        relation <name> [domain <Type>] [range <Type>]
        entity <name> type <Type>
    """
    ont = Ontology()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "entity":
                if len(parts) != 4 or parts[2] != "type":
                    raise OntologyError(f"malformed entity declaration: {line!r}", lineno)
                ont.entity_types[normalize_identifier(parts[1])] = parts[3]
                continue
            if parts[0] != "relation" or len(parts) < 2:
                raise OntologyError(f"malformed line: {line!r}", lineno)
            name = normalize_identifier(parts[1])
            rest = parts[2:]
            if not rest:
                ont.declare(name)
            elif rest == ["symmetric"]:
                ont.set_symmetric(name, lineno)
            elif len(rest) == 2 and rest[0] == "inverse":
                ont.set_inverse(name, normalize_identifier(rest[1]), lineno)
            elif len(rest) in (2, 4):
                info = ont.declare(name)
                pairs = dict(zip(rest[::2], rest[1::2]))
                if len(pairs) != len(rest) // 2 or not set(pairs) <= {"domain", "range"}:
                    raise OntologyError(f"malformed relation declaration: {line!r}", lineno)
                if "domain" in pairs:
                    info.domain = pairs["domain"]
                if "range" in pairs:
                    info.range = pairs["range"]
            else:
                raise OntologyError(f"malformed relation declaration: {line!r}", lineno)
        except FactFormatError as exc:
            raise OntologyError(str(exc), lineno) from None
    return ont


def format_ontology(ont: Ontology) -> str:
    lines = []
    written_pairs = set()
    for name, info in ont.relations.items():
        if info.symmetric:
            lines.append(f"relation {name} symmetric")
        elif info.inverse is not None:
            if name not in written_pairs:
                lines.append(f"relation {name} inverse {info.inverse}")
                written_pairs.update((name, info.inverse))
        else:
            lines.append(f"relation {name}")
        typing = []
        if info.domain:
            typing += ["domain", info.domain]
        if info.range:
            typing += ["range", info.range]
        if typing:
            lines.append(" ".join(["relation", name] + typing))
    for name, type_label in ont.entity_types.items():
        lines.append(f"entity {name} type {type_label}")
    return "".join(line + "\n" for line in lines)


def _parse_count(value: str, what: str, minimum: int, line: Optional[int]) -> Optional[int]:
    value = value.strip()
    if not value:
        return None
    try:
        number = int(value)
    except ValueError:
        raise FactFormatError(f"{what} must be an integer >= {minimum}, got {value!r}", line) from None
    if number < minimum:
        raise FactFormatError(f"{what} must be an integer >= {minimum}, got {value!r}", line)
    return number


def parse_fact_row(row: Sequence[str], line: Optional[int] = None) -> Fact:
    """Build a :class:`Fact` from a CSV record of 3 to 6 fields."""
    fields = list(row)
    if len(fields) > 6:
        raise FactFormatError(f"expected at most 6 fields, got {len(fields)}", line)
    fields += [""] * (6 - len(fields))
    names = FACT_HEADER[:3]
    for name, value in zip(names, fields[:3]):
        if not value.strip():
            raise FactFormatError(f"empty {name}", line)
    try:
        s, p, o = (normalize_identifier(v) for v in fields[:3])
        revealed = normalize_identifier(fields[5]) if fields[5].strip() else None
    except FactFormatError as exc:
        raise FactFormatError(str(exc), line) from None
    return Fact(
        s,
        p,
        o,
        episode=_parse_count(fields[3], "episode", 1, line),
        timestamp=_parse_count(fields[4], "timestamp", 0, line),
        revealed_by=revealed,
    )


def read_facts_csv(text: str) -> list[Fact]:
    """Parse fact CSV text.  A leading header row is skipped; blank rows ignored."""
    facts = []
    reader = csv.reader(io.StringIO(text))
    first = True
    for row in reader:
        lineno = reader.line_num
        if first:
            first = False
            if [c.strip().lower() for c in row[:3]] == list(FACT_HEADER[:3]):
                continue
        if not any(c.strip() for c in row):
            continue
        facts.append(parse_fact_row(row, lineno))
    return facts


def time_token(episode: int) -> str:
    """Episode time token, e.g. ``E06``; lexicographic order is temporal order."""
    return f"E{episode:02d}"


def statement_label(fact: Fact) -> str:
    episode = fact.episode if fact.episode is not None else "none"
    return f"stmt__{fact.subject}__{fact.predicate}__{fact.object}__{episode}"


class KnowledgeGraph:
    """Entities, relations and facts under an ontology.

    Mutated only during construction; analysis code treats it as read-only.
    """

    def __init__(self, ontology: Optional[Ontology] = None):
        self.ontology = ontology if ontology is not None else Ontology()
        self._entities: dict[str, None] = {}
        self._relations: dict[str, None] = {}
        self._facts: dict[tuple[str, str, str], Fact] = {}
        self._derived: set[tuple[str, str, str]] = set()
        self.reified: dict[tuple[str, str, str], str] = {}

    @property
    def entities(self) -> list[str]:
        return list(self._entities)

    @property
    def relations(self) -> list[str]:
        return list(self._relations)

    @property
    def facts(self) -> list[Fact]:
        return list(self._facts.values())

    def asserted_facts(self) -> list[Fact]:
        return [f for k, f in self._facts.items() if k not in self._derived]

    def derived_facts(self) -> list[Fact]:
        return [f for k, f in self._facts.items() if k in self._derived]

    def training_facts(self, include_derived: bool = False) -> list[Fact]:
        return self.facts if include_derived else self.asserted_facts()

    def is_derived(self, fact: Fact | tuple) -> bool:
        key = fact.key if isinstance(fact, Fact) else tuple(fact)
        return key in self._derived

    def has_entity(self, label: str) -> bool:
        return label in self._entities

    def has_relation(self, label: str) -> bool:
        return label in self._relations

    def get(self, key: tuple[str, str, str]) -> Optional[Fact]:
        return self._facts.get(tuple(key))

    def __contains__(self, item) -> bool:
        key = item.key if isinstance(item, Fact) else tuple(item)
        return key in self._facts

    def __len__(self) -> int:
        return len(self._facts)

    def triple_set(self) -> set[tuple[str, str, str]]:
        return set(self._facts)

    def add_entity(self, label: str) -> None:
        self._entities.setdefault(label, None)

    def _register_relation(self, label: str, mode: str) -> None:
        if label not in self.ontology and label not in RESERVED_RELATIONS:
            if mode == STRICT:
                raise ValidationError(f"relation {label!r} is not declared in the ontology")
            self.ontology.declare(label)
        self._relations.setdefault(label, None)

    def _check_types(self, fact: Fact) -> None:
        info = self.ontology.info(fact.predicate)
        types = self.ontology.entity_types
        for role, declared, entity in (
            ("domain", info.domain, fact.subject),
            ("range", info.range, fact.object),
        ):
            actual = types.get(entity)
            if declared and actual and declared != actual:
                raise ValidationError(
                    f"{fact}: {role} of {fact.predicate} expects type {declared}, "
                    f"{entity} has type {actual}"
                )

    def add_fact(self, fact: Fact, mode: str = PERMISSIVE, derived: bool = False) -> None:
        """Insert ``fact``; re-adding an existing triple only merges annotations."""
        if mode not in (STRICT, PERMISSIVE):
            raise ValueError(f"unknown mode {mode!r}")
        self._register_relation(fact.predicate, mode)
        if not derived:
            self._check_types(fact)
        self.add_entity(fact.subject)
        self.add_entity(fact.object)
        if fact.revealed_by is not None:
            self.add_entity(fact.revealed_by)

        existing = self._facts.get(fact.key)
        if existing is None:
            self._facts[fact.key] = fact
            if derived:
                self._derived.add(fact.key)
            return
        if not derived and fact.key in self._derived:
            self._derived.discard(fact.key)
        self._facts[fact.key] = _merge_annotations(existing, fact)

    def query(self, subject=None, predicate=None, object=None) -> list[Fact]:
        return query(self, subject, predicate, object)

    def copy(self) -> "KnowledgeGraph":
        other = KnowledgeGraph(self.ontology.copy())
        other._entities = dict(self._entities)
        other._relations = dict(self._relations)
        other._facts = dict(self._facts)
        other._derived = set(self._derived)
        other.reified = dict(self.reified)
        return other


def _merge_annotations(old: Fact, new: Fact) -> Fact:
    updates = {}
    for name in ("episode", "timestamp", "revealed_by"):
        before, after = getattr(old, name), getattr(new, name)
        if before is None and after is not None:
            updates[name] = after
        elif before is not None and after is not None and before != after:
            logger.warning(
                "conflicting %s for %s: keeping %r, ignoring %r", name, old, before, after
            )
    return dataclasses.replace(old, **updates) if updates else old


def add_fact(graph: KnowledgeGraph, fact: Fact, mode: str = PERMISSIVE) -> KnowledgeGraph:
    graph.add_fact(fact, mode)
    return graph


def build_graph(
    facts: Iterable[Fact],
    ontology: Optional[Ontology] = None,
    mode: str = PERMISSIVE,
    closure: bool = False,
) -> KnowledgeGraph:
    graph = KnowledgeGraph(ontology.copy() if ontology is not None else None)
    for fact in facts:
        graph.add_fact(fact, mode)
    if closure:
        apply_ontology_closure(graph)
    return graph


def load_graph(
    facts_path,
    ontology_path=None,
    mode: str = PERMISSIVE,
    closure: bool = False,
) -> KnowledgeGraph:
    ontology = None
    if ontology_path is not None:
        ontology = parse_ontology(Path(ontology_path).read_text(encoding="utf-8"))
    facts = read_facts_csv(Path(facts_path).read_text(encoding="utf-8"))
    return build_graph(facts, ontology, mode, closure)


def apply_ontology_closure(graph: KnowledgeGraph) -> KnowledgeGraph:
    """Materialize symmetric and inverse counterparts of asserted facts.

    Derived facts copy the episode and timestamp of their source.  Idempotent.
    """
    for fact in graph.asserted_facts():
        info = graph.ontology.info(fact.predicate)
        if info.symmetric:
            twin_predicate = fact.predicate
        elif info.inverse is not None:
            twin_predicate = info.inverse
        else:
            continue
        twin = Fact(
            fact.object,
            twin_predicate,
            fact.subject,
            episode=fact.episode,
            timestamp=fact.timestamp,
        )
        if twin.key not in graph:
            graph.add_fact(twin, PERMISSIVE, derived=True)
    return graph


def reify(
    graph: KnowledgeGraph,
    fact: Fact | tuple,
    occurs_at: Optional[str] = None,
    revealed_by: Optional[str] = None,
) -> str:
    """Turn ``fact`` into a statement entity and attach time/provenance facts.

    Returns the statement label.  The label depends only on the triple and its
    episode, so repeating a call with the same annotations is a no-op.
    """
    key = fact.key if isinstance(fact, Fact) else tuple(fact)
    stored = graph.get(key)
    if stored is None:
        raise ValidationError(f"cannot reify {key}: fact not in graph")
    stmt = graph.reified.get(key) or statement_label(stored)
    graph.reified[key] = stmt
    graph.add_entity(stmt)
    structural = [
        Fact(stmt, RDF_SUBJECT, stored.subject),
        Fact(stmt, RDF_PREDICATE, stored.predicate),
        Fact(stmt, RDF_OBJECT, stored.object),
    ]
    if occurs_at is not None:
        structural.append(Fact(stmt, OCCURS_AT, normalize_identifier(occurs_at)))
    if revealed_by is not None:
        structural.append(Fact(stmt, REVEALED_BY, normalize_identifier(revealed_by)))
    for f in structural:
        graph.add_fact(f, PERMISSIVE)
    return stmt


def reify_annotated(graph: KnowledgeGraph) -> list[str]:
    """Reify every asserted fact carrying an episode or revealed_by annotation."""
    labels = []
    for fact in graph.asserted_facts():
        if fact.predicate in RESERVED_RELATIONS:
            continue
        if fact.episode is None and fact.revealed_by is None:
            continue
        when = time_token(fact.episode) if fact.episode is not None else None
        labels.append(reify(graph, fact, occurs_at=when, revealed_by=fact.revealed_by))
    return labels


def query(graph: KnowledgeGraph, subject=None, predicate=None, object=None) -> list[Fact]:
    """All facts (asserted and derived) matching the bound positions, in insertion order."""
    return [
        f
        for f in graph._facts.values()
        if (subject is None or f.subject == subject)
        and (predicate is None or f.predicate == predicate)
        and (object is None or f.object == object)
    ]


def stats(graph: KnowledgeGraph) -> dict[str, int]:
    derived = len(graph._derived)
    return {
        "entity_count": len(graph._entities),
        "relation_count": len(graph._relations),
        "asserted_fact_count": len(graph._facts) - derived,
        "derived_fact_count": derived,
    }


def _iri(base: str, label: str) -> str:
    return f"<{base.rstrip('/')}/{label}>"


def export_ntriples(graph: KnowledgeGraph, base_iri: str = "http://example.org/kg") -> str:
    return "".join(
        f"{_iri(base_iri, f.subject)} {_iri(base_iri, f.predicate)} {_iri(base_iri, f.object)} .\n"
        for f in graph.facts
    )


_NT_LINE = re.compile(r"^<([^>]*)>\s+<([^>]*)>\s+<([^>]*)>\s*\.\s*$")


def import_ntriples(text: str, base_iri: str = "http://example.org/kg") -> KnowledgeGraph:
    prefix = base_iri.rstrip("/") + "/"
    graph = KnowledgeGraph()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        match = _NT_LINE.match(line)
        if not match:
            raise FactFormatError(f"malformed N-Triples line: {line!r}", lineno)
        labels = []
        for iri in match.groups():
            if not iri.startswith(prefix):
                raise FactFormatError(f"IRI {iri!r} outside base {base_iri!r}", lineno)
            labels.append(normalize_identifier(iri[len(prefix):]))
        graph.add_fact(Fact(*labels))
    return graph


def _blank(value) -> str:
    return "" if value is None else str(value)


def dump_archive(graph: KnowledgeGraph) -> str:
    """Serialize a graph to the line-based archive format.

    Layout: a magic comment, then ``[ontology]`` (ontology grammar lines),
    ``[facts]`` (fact CSV plus an ``origin`` column, asserted|derived) and
    ``[reified]`` (``statement,subject,predicate,object`` rows).
    """
    out = io.StringIO()
    out.write(ARCHIVE_MAGIC + "\n")
    out.write("[ontology]\n")
    out.write(format_ontology(graph.ontology))
    out.write("[facts]\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(FACT_HEADER + ("origin",))
    for key, f in graph._facts.items():
        writer.writerow(
            [f.subject, f.predicate, f.object, _blank(f.episode), _blank(f.timestamp),
             _blank(f.revealed_by), "derived" if key in graph._derived else "asserted"]
        )
    out.write("[reified]\n")
    for (s, p, o), stmt in graph.reified.items():
        writer.writerow([stmt, s, p, o])
    return out.getvalue()


def _sections(text: str) -> Iterator[tuple[str, int, str]]:
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1]
            continue
        if section is None:
            if stripped and not stripped.startswith("#"):
                raise KGError("content before first section", lineno)
            continue
        yield section, lineno, line


def load_archive(text: str) -> KnowledgeGraph:
    if not text.startswith(ARCHIVE_MAGIC):
        raise KGError("not a graph archive (missing header)", 1)
    ontology_lines: list[str] = []
    fact_rows: list[tuple[int, str]] = []
    reified_rows: list[tuple[int, str]] = []
    for section, lineno, line in _sections(text):
        if section == "ontology":
            ontology_lines.append(line)
        elif section == "facts":
            fact_rows.append((lineno, line))
        elif section == "reified":
            reified_rows.append((lineno, line))
        else:
            raise KGError(f"unknown section [{section}]", lineno)
    graph = KnowledgeGraph(parse_ontology("\n".join(ontology_lines)))
    for lineno, line in fact_rows:
        if not line.strip():
            continue
        row = next(csv.reader([line]))
        if row[:3] == list(FACT_HEADER[:3]):
            continue
        if len(row) != 7 or row[6] not in ("asserted", "derived"):
            raise KGError("malformed archive fact row", lineno)
        fact = parse_fact_row(row[:6], lineno)
        graph.add_fact(fact, PERMISSIVE, derived=row[6] == "derived")
    for lineno, line in reified_rows:
        if not line.strip():
            continue
        row = next(csv.reader([line]))
        if len(row) != 4:
            raise KGError("malformed archive reified row", lineno)
        graph.reified[(row[1], row[2], row[3])] = row[0]
    return graph
