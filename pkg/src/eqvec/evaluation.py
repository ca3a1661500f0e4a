"""Held-out scoring and model selection.

Two scores over held-out items: a softmax predictive log-likelihood over
the target plus its fixed negative samples (drives early stopping), and a
pseudo log-likelihood combining the target's log probability with the
averaged log complements of the negatives (drives model comparison).
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .model import LOG_EPS, Model, ModelConfig, sigmoid

log = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny


@dataclass
class EvalReport:
    split: str
    mean_predictive_ll: float
    mean_pseudo_ll: float
    n_items: int
    n_skipped: int
    config: dict


def _context_sum(model: Model, item):
    """Sum of context feature vectors, or None when an id is unusable."""
    s = np.zeros(model.word.k)
    try:
        for cls, idx in item.context:
            v = model.context_vector(cls, idx)
            if v is not None:
                s = s + v
    except (IndexError, ValueError):
        return None
    return s


def _candidate_scores(model: Model, item, s):
    cand = np.array([item.target] + list(item.negatives), dtype=np.int64)
    if cand.min() < 0 or cand.max() >= model.word.size:
        return None
    return model.word.rho[cand] @ s


def predictive_log_likelihood(item, model: Model):
    """log softmax probability of the held-out word against its negatives.

    Computed with max-subtraction; under a model that scores all candidates
    equally this is exactly log(1 / (n_negatives + 1)).  Returns None when
    the item references ids the model does not know (caller counts skips).
    """
    s = _context_sum(model, item)
    if s is None:
        return None
    z = _candidate_scores(model, item, s)
    if z is None:
        return None
    ex = np.exp(z - z.max())
    p = ex[0] / ex.sum()
    return float(np.log(max(p, _TINY)))


def pseudo_log_likelihood(item, model: Model):
    """Target log probability plus averaged log complements of negatives.

    Probabilities are Bernoulli sigmoids of the score by default; the
    softmax reading is available via ``config.pseudo_likelihood``.
    Probabilities are clamped to [1e-12, 1 - 1e-12].
    """
    s = _context_sum(model, item)
    if s is None:
        return None
    z = _candidate_scores(model, item, s)
    if z is None:
        return None
    if model.config.pseudo_likelihood == "softmax":
        ex = np.exp(z - z.max())
        p = ex / ex.sum()
    else:
        p = sigmoid(z)
    p = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
    value = math.log(p[0])
    if len(p) > 1:
        value += math.fsum(math.log1p(-pj) for pj in p[1:]) / (len(p) - 1)
    return value


def mean_predictive_ll(items, model: Model) -> float:
    """Mean over scored items; 0.0 when nothing is scorable (degenerate
    corpora with no held-out items still need a finite epoch trace)."""
    scores = [v for v in (predictive_log_likelihood(it, model) for it in items) if v is not None]
    if not scores:
        return 0.0
    return math.fsum(scores) / len(scores)


def evaluate_split(items, model: Model, split: str) -> EvalReport:
    pred, pseudo, skipped = [], [], 0
    for item in items:
        a = predictive_log_likelihood(item, model)
        b = pseudo_log_likelihood(item, model)
        if a is None or b is None:
            skipped += 1
            continue
        pred.append(a)
        pseudo.append(b)
    n = len(pred)
    return EvalReport(
        split=split,
        mean_predictive_ll=math.fsum(pred) / n if n else float("nan"),
        mean_pseudo_ll=math.fsum(pseudo) / n if n else float("nan"),
        n_items=n,
        n_skipped=skipped,
        config=vars(model.config).copy(),
    )


# --- early stopping -----------------------------------------------------------


class StopDecision(NamedTuple):
    stop: bool
    best_epoch: int  # 1-based


def early_stopping_controller(trace, max_epochs: int = 20) -> StopDecision:
    """Stop at the first epoch whose validation score fails to improve on
    its predecessor (ties count as no improvement); the retained epoch is
    the predecessor.  Hard cap at ``max_epochs``."""
    if len(trace) == 0:
        raise ValueError("empty epoch trace")
    n = min(len(trace), max_epochs)
    for i in range(1, n):
        if trace[i] <= trace[i - 1]:
            return StopDecision(True, i)
    return StopDecision(n >= max_epochs, n)


# --- grid selection -----------------------------------------------------------


@dataclass
class GridRow:
    mode: str
    k: int
    word_window: int
    eq_window: int
    valid_pseudo_ll: float
    test_pseudo_ll: float
    epochs_run: str
    selected: bool = False
    error: str = ""


def window_grid(word_windows=(4, 8, 16), eq_windows=(8, 16)):
    """Constrained (W, E) combinations with E >= W."""
    return [(w, e) for w in word_windows for e in eq_windows if e >= w]


def grid_select(data, base_config: ModelConfig, mode: str, word_windows=(4, 8, 16), eq_windows=(8, 16)):
    """Train one model per window combination and pick the validation-best.

    Returns ``(rows, best_row)``; single-run failures are recorded on their
    row and the grid continues.  Word-only models ignore the equation
    window, so their grid collapses to the word windows alone.
    """
    from .training import train_model

    if mode == "word":
        combos = [(w, max(w, min(eq_windows))) for w in sorted(set(word_windows))]
    else:
        combos = window_grid(word_windows, eq_windows)
    rows: list[GridRow] = []
    for w, e in combos:
        cfg = replace(base_config, word_window=w, eq_window=e)
        try:
            cfg.validate()
            fitted, records = train_model(data, cfg, mode)
            valid = evaluate_split(data.heldout_valid, fitted, "validation")
            test = evaluate_split(data.heldout_test, fitted, "test")
            epochs = "+".join(
                str(max(r.epoch for r in records if r.pass_name == p))
                for p in dict.fromkeys(r.pass_name for r in records)
            )
            rows.append(
                GridRow(mode, cfg.k, w, e, valid.mean_pseudo_ll, test.mean_pseudo_ll, epochs)
            )
        except Exception as exc:  # single run failure: record and continue
            log.warning("grid run (W=%d, E=%d) failed: %s", w, e, exc)
            rows.append(GridRow(mode, base_config.k, w, e, float("nan"), float("nan"), "", error=str(exc)))
    scored = [r for r in rows if not r.error and not math.isnan(r.valid_pseudo_ll)]
    best = max(scored, key=lambda r: r.valid_pseudo_ll, default=None)
    if best is not None:
        best.selected = True
    return rows, best
