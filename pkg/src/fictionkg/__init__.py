"""Ontology-validated, temporally reified knowledge graphs for narrative fiction,
with TransE embedding, t-SNE projection, random-walk topics and link prediction."""

from importlib.resources import files

__version__ = "0.1.0"


def fixture_path(name: str = "fixture_facts.csv"):
    """Path to a bundled fixture file (``fixture_facts.csv`` or ``fixture_ontology.txt``)."""
    return files(__name__) / "data" / name
