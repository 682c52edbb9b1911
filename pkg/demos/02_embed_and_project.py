"""Learn TransE vectors for the story graph and project them to the plane.

Run: python demos/02_embed_and_project.py
"""

import numpy as np

from fictionkg import core, fixture_path
from fictionkg.embedding import TrainConfig, init_model, score_triple, train
from fictionkg.tsne import tsne_project

kg = core.load_graph(fixture_path("fixture_facts.csv"), fixture_path("fixture_ontology.txt"))

model = init_model(kg, dim=50, seed=7)
before = np.mean([score_triple(model, *f.key) for f in kg.asserted_facts()])
model, history = train(model, kg, TrainConfig(epochs=200, seed=7))
after = np.mean([score_triple(model, *f.key) for f in kg.asserted_facts()])

print(f"mean fact residual: {before:.3f} -> {after:.3f}")
print(f"monitoring loss:    {history[0]:.3f} -> {history[-1]:.3f}")

# a true fact should now sit closer to zero than a made-up one
print("Veronica child_of Keith:", round(score_triple(model, "Veronica_Mars", "child_of", "Keith_Mars"), 3))
print("Veronica child_of Weevil:", round(score_triple(model, "Veronica_Mars", "child_of", "Weevil_Navarro"), 3))

# 15 entities is tiny, so keep perplexity small
Y, kl = tsne_project(model.entity_vecs, perplexity=4, seed=7)
print(f"t-SNE KL after exaggeration {dict(kl)[250]:.3f}, final {kl[-1][1]:.3f}")
for label, (x, y) in zip(model.entities, Y):
    print(f"  {label:32s} {x:8.2f} {y:8.2f}")
