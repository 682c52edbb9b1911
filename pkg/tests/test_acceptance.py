"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py``; a summary table of PASS/FAIL
lines is printed at the end of the session.
"""

import os
import time

import numpy as np
import pytest
from scipy.cluster.vq import kmeans2

from fictionkg import core
from fictionkg.cli import main
from fictionkg.core import Fact, build_graph, load_graph, parse_ontology, query, reify
from fictionkg.embedding import (
    TrainConfig,
    init_model,
    loss_and_grad,
    negative_sample,
    score_indices,
    train,
)
from fictionkg.graph import underlying_graph
from fictionkg.linkpred import evaluate, split
from fictionkg.topics import (
    generate_corpus,
    nmf,
    parse_corpus,
    random_walk,
    vertex_document_counts,
)
from fictionkg.tsne import tsne_project

from conftest import FIXTURE_FACTS, FIXTURE_ONTOLOGY, planted_graph
from gradcheck import fd_gradient, random_instance, relative_error
from oracles import brute_force_rank

pytestmark = pytest.mark.acceptance

CLOSURE_ONTOLOGY = "relation child_of inverse parent_of\nrelation friend_of symmetric\n"


@pytest.fixture
def criterion(request, record_property):
    """Tag the test with its criterion number (taken from the test name).

    Calling the returned function records measured values for the summary line.
    """
    number = int(request.node.name.split("_")[1])
    measured = []
    record_property("criterion", number)

    def note(**values):
        measured.extend(f"{k}={v}" for k, v in values.items())
        record_property("measured", " ".join(measured))
        print(f"\ncriterion {number}: {' '.join(measured)}")

    return note


def elapsed_since(t0):
    return time.perf_counter() - t0


def one_directional(facts, predicate):
    keys = {f.key for f in facts}
    return sum(1 for f in facts if f.predicate == predicate and (f.object, predicate, f.subject) not in keys)


def check_closure(facts):
    kg = build_graph(facts, parse_ontology(CLOSURE_ONTOLOGY))
    expected = sum(1 for f in facts if f.predicate == "child_of") + one_directional(facts, "friend_of")
    before = len(kg)
    core.apply_ontology_closure(kg)
    added = len(kg) - before
    derived_pairs = {(f.predicate, f.object, f.subject) for f in kg.derived_facts()}
    core.apply_ontology_closure(kg)
    return added, expected, len(kg) - before - added, derived_pairs


def test_1_ontology_closure(criterion):
    t0 = time.perf_counter()
    facts = core.read_facts_csv(FIXTURE_FACTS.read_text())
    added, expected, again, derived = check_closure(facts)
    assert added == expected == 1
    assert again == 0
    assert ("parent_of", "Veronica_Mars", "Keith_Mars") in derived

    # the fixture has no friend_of row; exercise that branch on an augmented copy
    extra = [Fact("Veronica_Mars", "friend_of", "Wallace_Fennel"),
             Fact("Wallace_Fennel", "friend_of", "Veronica_Mars"),
             Fact("Logan_Echolls", "friend_of", "Duncan_Kane"),
             Fact("Lilly_Kane", "child_of", "Jake_Kane")]
    added2, expected2, again2, _ = check_closure(facts + extra)
    assert added2 == expected2 == 3
    assert again2 == 0
    took = elapsed_since(t0)
    criterion(fixture_added=added, augmented_added=added2, second_pass=again + again2)
    assert took < 1.0


def test_2_reification_round_trip(criterion, tmp_path, capsys):
    t0 = time.perf_counter()
    kg = load_graph(FIXTURE_FACTS, FIXTURE_ONTOLOGY)
    asserted = kg.asserted_facts()
    stmts = [reify(kg, f, occurs_at="E06", revealed_by="Veronica_Mars") for f in asserted]
    got = query(kg, predicate="occurs_at")
    assert sorted(f.subject for f in got) == sorted(stmts)
    assert all(f.object == "E06" for f in got)
    snapshot = core.dump_archive(kg)
    for f in asserted:
        reify(kg, f, occurs_at="E06", revealed_by="Veronica_Mars")
    assert core.dump_archive(kg) == snapshot

    # same round trip through the command line
    archive = tmp_path / "g.kg"
    assert main(["ingest", str(FIXTURE_FACTS), "--ontology", str(FIXTURE_ONTOLOGY), "-o", str(archive)]) == 0
    triple = "white_sneakers,seen_at,Lilly_Kane's_room"
    reify_args = ["reify", str(archive), "--triple", triple, "--occurs-at", "E06",
                  "--revealed-by", "Veronica_Mars"]
    capsys.readouterr()
    assert main(reify_args) == 0
    stmt = capsys.readouterr().out.strip()
    before = archive.read_bytes()
    assert main(reify_args) == 0
    assert archive.read_bytes() == before
    capsys.readouterr()
    assert main(["query", str(archive), "--predicate", "occurs_at"]) == 0
    assert capsys.readouterr().out.splitlines() == [f"{stmt}\toccurs_at\tE06"]
    took = elapsed_since(t0)
    criterion(reified=len(stmts), cli_statement=stmt)
    assert took < 1.0


def test_3_full_dataset(criterion, capsys):
    path = os.environ.get("FICTIONKG_FULL_DATASET")
    if not path:
        criterion(note="FICTIONKG_FULL_DATASET unset")
        pytest.skip("full dataset not supplied (set FICTIONKG_FULL_DATASET)")
    argv = ["ingest", path]
    if os.environ.get("FICTIONKG_FULL_ONTOLOGY"):
        argv += ["--ontology", os.environ["FICTIONKG_FULL_ONTOLOGY"]]
    assert main(argv) == 0
    out = capsys.readouterr().out
    criterion(stats=out.replace("\n", " ").strip())
    assert "entity_count: 541\n" in out
    assert "asserted_fact_count: 1106\n" in out


def test_4_gradient_check(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        ent, rel, pos, neg = random_instance(rng, n_entities=5, n_relations=2, dim=8)
        for variant in ("hinge", "paper_literal"):
            _, g_ent, g_rel = loss_and_grad(ent, rel, pos, neg, 1.0, variant)
            fd_ent, fd_rel = fd_gradient(ent, rel, pos, neg, 1.0, variant, h=1e-5)
            err = max(relative_error(g_ent, fd_ent), relative_error(g_rel, fd_rel))
            worst = max(worst, err)
            assert err < 1e-4
    took = elapsed_since(t0)
    criterion(worst_relative_error=f"{worst:.2e}")
    assert took < 10.0


FIXTURE_RATIO_SEED7 = 0.4520272482386412


def test_5_transe_learning(criterion):
    t0 = time.perf_counter()
    kg = load_graph(FIXTURE_FACTS, FIXTURE_ONTOLOGY)
    initial = init_model(kg, dim=200, seed=7)
    config = TrainConfig(epochs=200, learning_rate=0.01, margin=1.0, seed=7, loss_variant="hinge")
    model, history = train(initial, kg, config)
    pos = model.triple_indices(kg.asserted_facts())
    before = score_indices(initial.entity_vecs, initial.relation_vecs, pos).mean()
    after = score_indices(model.entity_vecs, model.relation_vecs, pos).mean()
    ratio = after / before

    rng = np.random.default_rng(7)
    facts = kg.asserted_facts()
    corrupted = [negative_sample(facts[i % len(facts)], kg, rng) for i in range(1000)]
    neg = model.triple_indices(corrupted)
    neg_mean = score_indices(model.entity_vecs, model.relation_vecs, neg).mean()
    took = elapsed_since(t0)
    criterion(ratio=f"{ratio:.4f}", positive_mean=f"{after:.4f}", corruption_mean=f"{neg_mean:.4f}")
    assert ratio < 0.5
    assert after < neg_mean
    assert ratio == pytest.approx(FIXTURE_RATIO_SEED7, rel=1e-6)
    assert took < 30.0


# filtered hits@10 and ranks per seed, pinned from the first verified run
PLANTED_PINS = {
    0: (1.0, [1, 1, 1, 1, 1, 1]),
    1: (1.0, [1, 1, 1, 1, 1, 1]),
    2: (1.0, [1, 1, 1, 1, 1, 1]),
    3: (1.0, [1, 1, 1, 1, 1, 1]),
    4: (1.0, [2, 2, 1, 1, 1, 1]),
}


def test_6_planted_link_prediction(criterion):
    t0 = time.perf_counter()
    per_seed = {}
    for seed in PLANTED_PINS:
        kg = planted_graph()
        maps = [f for f in kg.facts if f.predicate == "maps_to"]
        chains = [f for f in kg.facts if f.predicate == "next"]
        train_facts, test_facts = split(kg, 0.9, seed=seed, facts=maps, keep_in_train=chains)
        assert (len(train_facts), len(test_facts)) == (27, 3)
        model, _ = train(init_model(kg, dim=50, seed=seed), build_graph(train_facts + chains),
                         TrainConfig(epochs=200, seed=seed))
        known = kg.triple_set()
        report = evaluate(model, test_facts, known)
        oracle = []
        for f in test_facts:
            oracle.append(brute_force_rank(model, f.subject, f.predicate, f.object, "tail", known))
            oracle.append(brute_force_rank(model, f.subject, f.predicate, f.object, "head", known))
        assert report.ranks == oracle
        per_seed[seed] = (report.hits_at[10], report.ranks)
    mean_hits = float(np.mean([h for h, _ in per_seed.values()]))
    took = elapsed_since(t0)
    criterion(mean_hits10=f"{mean_hits:.3f}",
              per_seed=",".join(f"{h:.2f}" for h, _ in per_seed.values()))
    assert mean_hits >= 0.8
    assert per_seed == PLANTED_PINS
    assert took < 60.0


def test_7_walk_validity(criterion):
    t0 = time.perf_counter()
    kg = load_graph(FIXTURE_FACTS, FIXTURE_ONTOLOGY)
    g = underlying_graph(kg)
    facts = kg.triple_set()
    corpus = generate_corpus(g, n=10_000, length=50, seed=7)
    for doc in corpus.documents:
        assert len(doc.tokens) == 101
        for k in range(0, 100, 2):
            u, label, v = doc.tokens[k:k + 3]
            assert (u, label, v) in facts or (v, label, u) in facts

    tri = underlying_graph(build_graph([Fact("a", "r", "b"), Fact("b", "r", "c"), Fact("c", "r", "a")]))
    rng = np.random.default_rng(7)
    to_b = sum(random_walk(tri, tri.index["a"], 1, rng).tokens[2] == "b" for _ in range(30_000))
    frac = to_b / 30_000
    took = elapsed_since(t0)
    criterion(documents=len(corpus), triangle_fraction=f"{frac:.4f}")
    assert abs(frac - 0.5) <= 0.02
    assert took < 30.0


def test_8_nmf(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst_rise = 0.0
    for trial in range(10):
        X = rng.random((50, 200))
        _, _, res = nmf(X, r=25, iterations=500, seed=trial, tol=0)
        assert len(res) == 500
        worst_rise = max(worst_rise, float(np.max(np.diff(res))))
        assert np.all(np.diff(res) <= 1e-9)
    u, v = rng.random(50) + 0.1, rng.random(200) + 0.1
    X1 = np.outer(u, v)
    U, V, _ = nmf(X1, r=1, iterations=500, seed=0)
    rel = np.linalg.norm(X1 - U @ V) / np.linalg.norm(X1)
    took = elapsed_since(t0)
    criterion(max_step_increase=f"{worst_rise:.1e}", rank1_rel_residual=f"{rel:.1e}")
    assert rel < 1e-6
    assert took < 60.0


def test_9_tsne(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    centers = rng.normal(0, 10, size=(3, 20))
    labels = np.arange(100) % 3
    X = centers[labels] + rng.normal(size=(100, 20))
    Y, history = tsne_project(X, iterations=1000, seed=9)
    kl = dict(history)
    _, assigned = kmeans2(Y, 3, seed=0, minit="++")
    purity = sum(np.bincount(labels[assigned == c]).max() for c in range(3) if np.any(assigned == c)) / 100
    took = elapsed_since(t0)
    criterion(kl_250=f"{kl[250]:.4f}", kl_final=f"{kl[1000]:.4f}", purity=f"{purity:.2f}")
    assert kl[1000] < kl[250]
    assert purity >= 0.9
    assert took < 60.0


def run_pipeline(workdir):
    archive = workdir / "g.kg"
    steps = [
        ["ingest", str(FIXTURE_FACTS), "--ontology", str(FIXTURE_ONTOLOGY), "--closure", "-o", str(archive)],
        ["embed", str(archive), "--seed", "7", "-o", str(workdir / "emb.csv")],
        ["project", str(workdir / "emb.csv"), "--seed", "7", "-o", str(workdir / "proj.csv")],
        # the fixture vocabulary has only 24 tokens, below the default rank of 25
        ["topics", str(archive), "--r", "10", "--seed", "7", "--corpus-out", str(workdir / "corpus.txt"),
         "-o", str(workdir / "topics.csv")],
        ["eval", str(archive), "--split", "0.9", "--allow-unseen", "--seed", "7",
         "-o", str(workdir / "eval.csv")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return {p.name: p.read_bytes() for p in sorted(workdir.iterdir())}


def test_10_end_to_end_determinism(criterion, tmp_path, capsys):
    t0 = time.perf_counter()
    runs = []
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        runs.append(run_pipeline(tmp_path / name))
    first, second = runs
    capsys.readouterr()
    took = elapsed_since(t0)
    same = [name for name in first if first[name] == second.get(name)]
    criterion(artifacts=len(first), identical=len(same))
    assert set(first) == set(second) == {"g.kg", "emb.csv", "proj.csv", "corpus.txt", "topics.csv", "eval.csv"}
    assert first == second
    assert took < 120.0


def test_11_coverage(criterion, tmp_path, capsys):
    archive = tmp_path / "g.kg"
    corpus_file = tmp_path / "corpus.txt"
    topics_file = tmp_path / "topics.csv"
    assert main(["ingest", str(FIXTURE_FACTS), "--ontology", str(FIXTURE_ONTOLOGY), "-o", str(archive)]) == 0
    assert main(["topics", str(archive), "--n", "1000", "--len", "50", "--r", "10", "--seed", "7",
                 "--corpus-out", str(corpus_file), "-o", str(topics_file)]) == 0
    capsys.readouterr()
    reported = dict(
        item.split("=") for item in topics_file.read_text().splitlines()[1].lstrip("# ").split()
    )

    # independent count: which entities occur in a vertex slot of some line
    entities = core.load_archive(archive.read_text()).entities
    docs = parse_corpus(corpus_file.read_text())
    assert len(docs) == 1000
    seen = set()
    for tokens in docs:
        seen.update(tokens[0::2])
    independent = sum(1 for e in entities if e in seen) / len(entities)
    assert float(reported["coverage"]) == independent

    kg = load_graph(FIXTURE_FACTS, FIXTURE_ONTOLOGY)
    kg.add_entity("Unmentioned_Extra")
    g = underlying_graph(kg)
    assert g.degree(g.index["Unmentioned_Extra"]) == 0
    counts = vertex_document_counts(generate_corpus(g, 1000, 50, seed=7), g)
    criterion(coverage=reported["coverage"], independent=independent,
              isolated_documents=counts["Unmentioned_Extra"])
    assert counts["Unmentioned_Extra"] == 0
