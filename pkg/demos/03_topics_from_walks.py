"""Turn random walks over the graph into documents and factor them into topics.

Run: python demos/03_topics_from_walks.py
"""

from fictionkg import core, fixture_path
from fictionkg.graph import underlying_graph
from fictionkg.topics import coverage_stats, fit_topics, generate_corpus, top_terms

kg = core.load_graph(fixture_path("fixture_facts.csv"), fixture_path("fixture_ontology.txt"))
g = underlying_graph(kg)

corpus = generate_corpus(g, n=1000, length=50, seed=7)
print("first document starts:", " ".join(corpus.documents[0].tokens[:9]), "...")
print("coverage:", coverage_stats(corpus, g))

# The fixture vocabulary is small (24 tokens), so use fewer topics than the
# default 25.  On a full-size graph the default is fine.
model = fit_topics(corpus, r=5, seed=7)
print(f"NMF residual {model.residuals[0]:.3f} -> {model.residuals[-1]:.3f} "
      f"in {len(model.residuals)} iterations")
for j, terms in enumerate(top_terms(model, 5)):
    print(f"topic {j}:", ", ".join(token for token, _ in terms))
