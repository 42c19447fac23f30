import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from aigflow.aig import parse_aiger

CORPUS = Path(__file__).resolve().parent / "corpus"


def corpus_paths():
    return sorted(CORPUS.glob("*.aag"))


def load_corpus():
    return [parse_aiger(p.read_text(), name=p.stem) for p in corpus_paths()]


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def corpus_by_name(corpus):
    return {a.name: a for a in corpus}
