"""Build a small story graph, close it under its ontology, and annotate facts.

Run: python demos/01_build_and_query.py
"""

from fictionkg import core, fixture_path
from fictionkg.graph import character_subgraph, export_dot

# The bundled fixture: nine facts about a small-town detective story,
# plus an ontology saying child_of and parent_of are inverses.
kg = core.load_graph(fixture_path("fixture_facts.csv"), fixture_path("fixture_ontology.txt"))
print("loaded:", core.stats(kg))

# Closure materializes the inverse of every child_of fact.
core.apply_ontology_closure(kg)
for fact in kg.derived_facts():
    print("derived:", fact.subject, fact.predicate, fact.object)

# Reification turns a fact into a statement entity, so we can say when
# it happens in the story and who uncovers it.
stmt = core.reify(kg, ("white_sneakers", "seen_at", "Lilly_Kane's_room"),
                  occurs_at="E06", revealed_by="Veronica_Mars")
print("statement:", stmt)
for fact in core.query(kg, subject=stmt):
    print("  ", fact.predicate, fact.object)

# Everything known about one character, as Graphviz DOT.
print(export_dot(character_subgraph(kg, "Keith_Mars", subject_only=False), name="keith"))

# The archive format keeps derived flags and reifications intact.
restored = core.load_archive(core.dump_archive(kg))
assert core.stats(restored) == core.stats(kg)
print(core.export_ntriples(kg).splitlines()[0])
