import pytest

import fictionkg
from fictionkg.core import Fact, KnowledgeGraph, load_graph

FIXTURE_FACTS = fictionkg.fixture_path("fixture_facts.csv")
FIXTURE_ONTOLOGY = fictionkg.fixture_path("fixture_ontology.txt")


@pytest.fixture
def fixture_kg():
    return load_graph(FIXTURE_FACTS, FIXTURE_ONTOLOGY)


@pytest.fixture
def fixture_paths():
    return str(FIXTURE_FACTS), str(FIXTURE_ONTOLOGY)


def planted_graph():
    """60 entities: e_i maps_to e_{i+30}, plus two parallel `next` chains."""
    kg = KnowledgeGraph()
    for i in range(30):
        kg.add_fact(Fact(f"e{i:02d}", "maps_to", f"e{i + 30:02d}"))
    for base in (0, 30):
        for i in range(29):
            kg.add_fact(Fact(f"e{base + i:02d}", "next", f"e{base + i + 1:02d}"))
    return kg


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion: outcome, wall time, measured values."""
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and outcome != "skipped":
                continue
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
            lines.append((props["criterion"], status, rep.duration, props.get("measured", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, duration, measured in sorted(lines):
        terminalreporter.write_line(f"{status}  criterion {number:>2}  {duration:7.2f}s  {measured}")
