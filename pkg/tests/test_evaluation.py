"""Held-out scores against direct-arithmetic oracles; stopping rule; grid."""

import math

import numpy as np
import pytest

from eqvec.corpus import HeldOutItem
from eqvec.evaluation import (
    StopDecision,
    early_stopping_controller,
    evaluate_split,
    predictive_log_likelihood,
    pseudo_log_likelihood,
)
from eqvec.model import EmbeddingTable, Model, ModelConfig


def item(target, ctx_words, eq_id, negatives):
    return HeldOutItem(
        target=target,
        context=[("word", w) for w in ctx_words] + [("eq", eq_id)],
        negatives=list(negatives),
        split="validation",
        doc_id="d",
        position=0,
        eq_id=eq_id,
    )


def k2_model(word_rho, word_alpha, eq_alpha, **cfg):
    """Hand-set K=2 model with explicit matrices."""
    word = EmbeddingTable.from_arrays(np.array(word_rho, float), np.array(word_alpha, float))
    eq = EmbeddingTable.from_arrays(np.zeros_like(np.array(eq_alpha, float)), np.array(eq_alpha, float))
    return Model("equation", ModelConfig(k=2, **cfg), word, eq=eq)


FIX_RHO = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5], [0.3, -0.2]]
FIX_ALPHA = [[0.5, 0.5], [0.2, -0.1], [0.0, 1.0], [-0.4, 0.8]]
FIX_EQ_ALPHA = [[0.25, -0.75]]


def oracle_scores(model, it):
    ctx = [model.word.alpha[i] for c, i in it.context if c == "word"]
    ctx.append(model.eq.alpha[[i for c, i in it.context if c == "eq"][0]])
    s = [math.fsum(v[d] for v in ctx) for d in range(2)]
    cand = [it.target] + list(it.negatives)
    return [math.fsum(model.word.rho[c][d] * s[d] for d in range(2)) for c in cand]


def test_predictive_matches_direct_softmax_oracle():
    model = k2_model(FIX_RHO, FIX_ALPHA, FIX_EQ_ALPHA)
    it = item(0, [1, 3], 0, [2, 3])
    z = oracle_scores(model, it)
    want = math.log(math.exp(z[0]) / math.fsum(math.exp(v) for v in z))
    got = predictive_log_likelihood(it, model)
    assert got == pytest.approx(want, abs=1e-12)


def test_pseudo_matches_direct_bernoulli_oracle():
    model = k2_model(FIX_RHO, FIX_ALPHA, FIX_EQ_ALPHA)
    it = item(1, [0, 2], 0, [3, 2])
    z = oracle_scores(model, it)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    want = math.log(sig(z[0])) + (
        math.log(1.0 - sig(z[1])) + math.log(1.0 - sig(z[2]))
    ) / 2.0
    got = pseudo_log_likelihood(it, model)
    assert got == pytest.approx(want, abs=1e-12)


def test_pseudo_softmax_reading_flag():
    model = k2_model(FIX_RHO, FIX_ALPHA, FIX_EQ_ALPHA, pseudo_likelihood="softmax")
    it = item(1, [0, 2], 0, [3, 2])
    z = oracle_scores(model, it)
    exps = [math.exp(v) for v in z]
    p = [e / math.fsum(exps) for e in exps]
    want = math.log(p[0]) + (math.log(1 - p[1]) + math.log(1 - p[2])) / 2.0
    assert pseudo_log_likelihood(it, model) == pytest.approx(want, abs=1e-12)


def test_uniform_model_predictive_is_exact():
    # all candidate scores equal -> log(1/(n_negatives + 1)) bit-exactly
    word = EmbeddingTable.from_arrays(np.zeros((12, 2)), np.ones((12, 2)))
    eq = EmbeddingTable.from_arrays(np.zeros((1, 2)), np.ones((1, 2)))
    model = Model("equation", ModelConfig(k=2), word, eq=eq)
    for n_neg in (1, 4, 10):
        it = item(0, [1, 2], 0, list(range(1, n_neg + 1)))
        assert predictive_log_likelihood(it, model) == math.log(1.0 / (n_neg + 1))


def test_predictive_saturates_to_zero():
    rho = [[50.0, 0.0]] + [[-50.0, 0.0]] * 3
    model = k2_model(rho, FIX_ALPHA, FIX_EQ_ALPHA)
    it = item(0, [0, 1], 0, [1, 2, 3])
    assert -1e-15 < predictive_log_likelihood(it, model) <= 0.0


def test_pseudo_all_zero_dots():
    model = k2_model(np.zeros((4, 2)), FIX_ALPHA, FIX_EQ_ALPHA)
    it = item(0, [1], 0, [2, 3])
    assert pseudo_log_likelihood(it, model) == pytest.approx(-2 * math.log(2), abs=1e-12)


def test_pseudo_perfect_model_tends_to_zero():
    word = EmbeddingTable.from_arrays(
        np.array([[40.0, 0.0], [-40.0, 0.0], [-40.0, 0.0]]), np.ones((3, 2))
    )
    eq = EmbeddingTable.from_arrays(np.zeros((1, 2)), np.full((1, 2), 0.5))
    model = Model("equation", ModelConfig(k=2), word, eq=eq)
    it = item(0, [1], 0, [1, 2])
    # probabilities clamp at 1e-12, so each term contributes about -1e-12
    assert -1e-11 < pseudo_log_likelihood(it, model) <= 0.0


def test_scores_invariant_under_context_and_negative_permutation():
    model = k2_model(FIX_RHO, FIX_ALPHA, FIX_EQ_ALPHA)
    a = item(0, [1, 2, 3], 0, [2, 3, 1])
    b = HeldOutItem(
        target=0,
        context=[("eq", 0), ("word", 3), ("word", 1), ("word", 2)],
        negatives=[1, 3, 2],
        split="validation",
        doc_id="d",
        position=0,
        eq_id=0,
    )
    assert predictive_log_likelihood(a, model) == pytest.approx(
        predictive_log_likelihood(b, model), abs=1e-12
    )
    assert pseudo_log_likelihood(a, model) == pytest.approx(
        pseudo_log_likelihood(b, model), abs=1e-12
    )


def test_predictive_never_positive():
    rng = np.random.default_rng(0)
    word = EmbeddingTable(20, 3, rng, 2.0)
    eq = EmbeddingTable(2, 3, rng, 2.0)
    model = Model("equation", ModelConfig(k=3), word, eq=eq)
    for _ in range(100):
        it = item(
            int(rng.integers(20)),
            list(rng.integers(0, 20, size=3)),
            int(rng.integers(2)),
            list(rng.integers(0, 20, size=5)),
        )
        assert predictive_log_likelihood(it, model) <= 0.0


def test_unknown_ids_skip_and_count():
    model = k2_model(FIX_RHO, FIX_ALPHA, FIX_EQ_ALPHA)
    good = item(0, [1], 0, [2])
    bad = item(0, [1], 5, [2])  # equation id out of range
    report = evaluate_split([good, bad], model, "validation")
    assert report.n_items == 1
    assert report.n_skipped == 1


def test_word_mode_ignores_equation_context():
    word = EmbeddingTable.from_arrays(np.array(FIX_RHO, float), np.array(FIX_ALPHA, float))
    model = Model("word", ModelConfig(k=2), word, n_equations=1)
    it = item(0, [1, 2], 0, [3])
    s = np.array(FIX_ALPHA[1]) + np.array(FIX_ALPHA[2])
    z = [np.array(FIX_RHO[0]) @ s, np.array(FIX_RHO[3]) @ s]
    want = math.log(math.exp(z[0]) / (math.exp(z[0]) + math.exp(z[1])))
    assert predictive_log_likelihood(it, model) == pytest.approx(want, abs=1e-12)


def test_report_mean_is_order_independent():
    model = k2_model(FIX_RHO, FIX_ALPHA, FIX_EQ_ALPHA)
    items = [item(i % 4, [(i + 1) % 4], 0, [(i + 2) % 4, (i + 3) % 4]) for i in range(40)]
    fwd = evaluate_split(items, model, "validation")
    rev = evaluate_split(list(reversed(items)), model, "validation")
    assert fwd.mean_pseudo_ll == rev.mean_pseudo_ll
    assert fwd.mean_predictive_ll == rev.mean_predictive_ll


# --- early stopping ------------------------------------------------------------


def test_controller_stops_on_decline():
    assert early_stopping_controller([-3.0, -2.0, -2.5]) == StopDecision(True, 2)


def test_controller_tie_counts_as_stop():
    assert early_stopping_controller([-3.0, -3.0]) == StopDecision(True, 1)


def test_controller_improving_to_cap():
    trace = [-3.0 + 0.1 * i for i in range(20)]
    assert early_stopping_controller(trace, max_epochs=20) == StopDecision(True, 20)


def test_controller_improving_below_cap_continues():
    assert early_stopping_controller([-3.0, -2.0], max_epochs=20) == StopDecision(False, 2)


def test_controller_never_returns_declining_epoch():
    rng = np.random.default_rng(3)
    for _ in range(200):
        trace = list(rng.normal(size=rng.integers(1, 25)))
        decision = early_stopping_controller(trace, max_epochs=20)
        best = decision.best_epoch
        assert 1 <= best <= min(len(trace), 20)
        if best > 1:
            assert trace[best - 1] > trace[best - 2]


def test_controller_empty_trace_errors():
    with pytest.raises(ValueError):
        early_stopping_controller([])


# --- grid ------------------------------------------------------------------------


def test_window_grid_enumeration():
    from eqvec.evaluation import window_grid

    combos = window_grid((4, 8, 16), (8, 16))
    assert combos == [(4, 8), (4, 16), (8, 8), (8, 16), (16, 16)]
    assert len(combos) <= 5
