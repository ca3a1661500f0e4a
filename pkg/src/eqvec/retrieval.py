"""Similarity queries over a fitted model.

Three query families: nearest equations to an equation (Euclidean over
equation feature vectors), nearest words to an equation (cosine between
the equation's interaction vector and word feature vectors), and nearest
equations to a bag of words (cosine against equation vectors, query being
the mean of the words' interaction vectors).  Scans are exhaustive; ties
break on ascending id and the query item never appears in its own hits.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary
from .model import Model

log = logging.getLogger(__name__)

METRICS = ("cosine", "euclidean")


@dataclass
class Ranking:
    query: str
    metric: str
    hits: list[tuple[int, float]]
    dropped: list[str] = field(default_factory=list)


def _finite_rows(matrix: np.ndarray) -> np.ndarray:
    return np.isfinite(matrix).all(axis=1)


def _scores(matrix: np.ndarray, query: np.ndarray, metric: str) -> np.ndarray:
    """Per-row score; rows without a representation score worst."""
    valid = _finite_rows(matrix)
    safe = np.where(valid[:, None], matrix, 0.0)
    if metric == "euclidean":
        d = np.sqrt(((safe - query) ** 2).sum(axis=1))
        return np.where(valid, d, np.inf)
    if metric == "cosine":
        norms = np.sqrt((safe**2).sum(axis=1))
        qn = float(np.sqrt(query @ query))
        with np.errstate(invalid="ignore", divide="ignore"):
            c = (safe @ query) / (norms * qn)
        c = np.where(valid & (norms > 0) & (qn > 0), c, -np.inf)
        return c
    raise ValueError(f"unknown metric {metric!r}")


def _rank(scores: np.ndarray, k: int, ascending: bool, exclude: int | None = None):
    ids = np.arange(len(scores))
    key = scores if ascending else -scores
    if exclude is not None:
        keep = ids != exclude
        ids, key, scores = ids[keep], key[keep], scores[keep]
    order = np.lexsort((ids, key))[:k]
    return [(int(ids[i]), float(scores[i])) for i in order]


def nearest_equations(model: Model, eq_id: int, k: int = 5, metric: str = "euclidean") -> Ranking:
    """Top-k equations nearest the query equation over feature vectors."""
    if not 0 <= eq_id < model.n_equations:
        raise IndexError(f"unknown equation id {eq_id}")
    matrix = model.equation_matrix("alpha")
    query = matrix[eq_id]
    if not np.isfinite(query).all():
        raise ValueError(f"untokenizable equation {eq_id} has no vector")
    scores = _scores(matrix, query, metric)
    return Ranking(f"eq:{eq_id}", metric, _rank(scores, k, metric == "euclidean", exclude=eq_id))


def nearest_words(model: Model, eq_id: int, k: int = 5, metric: str = "cosine") -> Ranking:
    """Top-k words by similarity between the equation's interaction vector
    and every word's feature vector; zero-norm words sink to the bottom."""
    if not 0 <= eq_id < model.n_equations:
        raise IndexError(f"unknown equation id {eq_id}")
    _, rho_e = model.equation_vectors(eq_id)
    scores = _scores(model.word.alpha, rho_e, metric)
    return Ranking(f"eq:{eq_id}", metric, _rank(scores, k, metric == "euclidean"))


def equations_for_words(
    model: Model,
    vocab: Vocabulary,
    words,
    k: int = 5,
    metric: str = "cosine",
    vectors: str | None = None,
) -> Ranking:
    """Top-k equations for a bag-of-words query.

    The query vector is the mean of the words' interaction vectors; unknown
    words are reported and dropped, an all-unknown query is an error.
    ``vectors`` picks which equation matrix to scan (defaults to the model
    config, interaction vectors unless overridden)."""
    known, dropped = [], []
    for w in words:
        wid = vocab.index.get(w)
        (known if wid is not None else dropped).append(wid if wid is not None else w)
    if dropped:
        log.warning("query words not in vocabulary: %s", ", ".join(dropped))
    if not known:
        raise ValueError("no query word is in the vocabulary")
    query = model.word.rho[np.array(known, dtype=np.int64)].mean(axis=0)
    which = vectors or model.config.word2eq_vectors
    matrix = model.equation_matrix(which)
    scores = _scores(matrix, query, metric)
    return Ranking(
        "words:" + ",".join(str(w) for w in words),
        metric,
        _rank(scores, k, metric == "euclidean"),
        dropped=dropped,
    )
