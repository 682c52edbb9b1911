"""Hold out facts, train on the rest, and see whether the model finds them again.

The graph is synthetic: two parallel chains of 30 entities, plus a maps_to
relation linking position i of one chain to position i of the other.  A
translation model should learn that maps_to is "jump to the other chain".

Run: python demos/04_link_prediction.py
"""

from fictionkg.core import Fact, KnowledgeGraph, build_graph
from fictionkg.embedding import TrainConfig, init_model, train
from fictionkg.linkpred import evaluate, format_report, rank_tails, split

kg = KnowledgeGraph()
for i in range(30):
    kg.add_fact(Fact(f"e{i:02d}", "maps_to", f"e{i + 30:02d}"))
for base in (0, 30):
    for i in range(29):
        kg.add_fact(Fact(f"e{base + i:02d}", "next", f"e{base + i + 1:02d}"))

maps = [f for f in kg.facts if f.predicate == "maps_to"]
chains = [f for f in kg.facts if f.predicate == "next"]

# hold out 10% of the maps_to facts; chains always stay in training
train_facts, test_facts = split(kg, 0.9, seed=0, facts=maps, keep_in_train=chains)
print("held out:", [f.key for f in test_facts])

model = init_model(kg, dim=50, seed=0)
model, _ = train(model, build_graph(train_facts + chains), TrainConfig(epochs=200, seed=0))

print(format_report(evaluate(model, test_facts, kg.triple_set())))

s, r, o = test_facts[0].key
ranking = rank_tails(model, s, r, filter_known=kg.triple_set(), target=o)
print(f"top guesses for ({s}, {r}, ?):", ranking.labels()[:5], "| truth:", o)
