import pytest

from eqvec.corpus import IngestParams, ingest_corpus
from eqvec.model import ModelConfig
from eqvec.synthetic import planted_corpus
from eqvec.training import train_model

# One experiment configuration for every planted-corpus check: identical
# across modes so comparisons stay fair.
PLANTED_DOCS = 200
PLANTED_CORPUS_SEED = 7
PLANTED_INGEST_SEED = 11
ACCEPT_KW = dict(k=25, word_window=4, eq_window=16, unit_window=2, learning_rate=0.05)
RETRIEVAL_SEED = 4
ORDERING_SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="session")
def planted():
    pc = planted_corpus(n_docs=PLANTED_DOCS, seed=PLANTED_CORPUS_SEED)
    data = ingest_corpus(pc.documents, IngestParams(seed=PLANTED_INGEST_SEED))
    return pc, data


@pytest.fixture(scope="session")
def trained(planted):
    """Lazily trained planted-corpus models, cached per (mode, seed)."""
    _, data = planted
    cache = {}

    def get(mode, seed):
        key = (mode, seed)
        if key not in cache:
            cfg = ModelConfig(seed=seed, **ACCEPT_KW)
            cache[key] = train_model(data, cfg, mode)[0]
        return cache[key]

    return get
