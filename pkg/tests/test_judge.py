import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_panel
from prefsignal.judge import (
    IncompleteVerdictsError,
    VerdictRecord,
    conditional_accuracy,
    majority_from_panels,
    pair_verdicts,
    paraphrase_sigma,
    parse_verdict_text,
    position_bias_rate,
    s1_score,
    score_judges,
    spearman_rho,
)

# six-judge diagnostics: position-bias rate and conditional accuracy columns
POS_BIAS = [0.775, 0.679, 0.463, 0.439, 0.868, 0.551]
COND_ACC = [0.630, 0.613, 0.567, 0.546, 0.656, 0.550]


def dual(prompt, a, b, behaviour, crit="c", judge="j", para=0):
    """Both orders of one pair. ``behaviour`` is a model id (content choice), 'first' or 'second'."""
    out = []
    for order in ("AB", "BA"):
        first = a if order == "AB" else b
        if behaviour in ("first", "second"):
            verdict = f"{behaviour}-position"
        else:
            verdict = "first-position" if behaviour == first else "second-position"
        out.append(VerdictRecord(judge, crit, prompt, a, b, order, verdict, para))
    return out


def majority(entries, crit="c"):
    return {(crit, p, frozenset((a, b))): w for p, a, b, w in entries}


def test_s1_weights():
    maj = majority([("q1", "x", "y", "x"), ("q2", "x", "y", "x"), ("q3", "x", "y", "x")])
    pairs = {d.key[1]: d for d in pair_verdicts(dual("q1", "x", "y", "x") + dual("q2", "x", "y", "y") + dual("q3", "x", "y", "first"))}
    assert pairs["q1"].weight("x") == 1.0
    assert pairs["q2"].weight("x") == 0.0
    assert pairs["q3"].weight("x") == 0.5
    assert pairs["q3"].position_locked and not pairs["q3"].consistent
    score = s1_score([v for d in pairs.values() for v in (d.ab, d.ba)], maj)
    assert score.macro_acc == pytest.approx(0.5)


def test_all_inconsistent_judge_scores_half():
    entries, verdicts = [], []
    for i, crit in itertools.product(range(7), ("c1", "c2", "c3")):
        w = "x" if i % 3 else "y"
        entries.append((crit, f"q{i}", "x", "y", w))
        verdicts += dual(f"q{i}", "x", "y", "first" if i % 2 else "second", crit=crit)
    maj = {(c, p, frozenset((a, b))): w for c, p, a, b, w in entries}
    s = s1_score(verdicts, maj)
    assert s.macro_acc == 0.5
    assert s.position_bias_rate == 1.0
    with pytest.raises(ValueError):
        conditional_accuracy(verdicts, maj)
    assert s.conditional_acc is None


def test_position_bias_fixture():
    verdicts = []
    for i in range(10):
        verdicts += dual(f"q{i}", "m1", "m2", "first" if i < 4 else ("m1" if i % 2 else "m2"))
    assert position_bias_rate(verdicts) == 0.4
    always_first = [v for i in range(5) for v in dual(f"q{i}", "m1", "m2", "first")]
    assert position_bias_rate(always_first) == 1.0
    consistent = [v for i in range(5) for v in dual(f"q{i}", "m1", "m2", "m2")]
    assert position_bias_rate(consistent) == 0.0


def test_conditional_accuracy_fixtures():
    maj = majority([(f"q{i}", "a", "b", "a") for i in range(6)] + [("q6", "a", "b", None)])
    v = (
        dual("q0", "a", "b", "a") + dual("q1", "a", "b", "a") + dual("q2", "a", "b", "b")
        + dual("q3", "a", "b", "first") + dual("q4", "a", "b", "second") + dual("q5", "a", "b", "a")
        + dual("q6", "a", "b", "a")
    )
    # consistent non-tie pairs: q0, q1, q2, q5 -> 3 of 4 agree
    assert conditional_accuracy(v, maj) == 0.75
    s = s1_score(v, maj)
    assert s.n_tie_excluded == 1 and s.n_pairs == 7
    assert s.macro_acc == pytest.approx((1 + 1 + 0 + 0.5 + 0.5 + 1) / 6)
    # position-bias counts every pair, tied majority included
    assert s.position_bias_rate == pytest.approx(2 / 7)


def test_bias_plus_consistency_is_one():
    rng = np.random.default_rng(0)
    choices = ["first", "second", "a", "b"]
    v = [r for i in range(40) for r in dual(f"q{i}", "a", "b", choices[rng.integers(4)])]
    pairs = pair_verdicts(v)
    assert position_bias_rate(pairs) + np.mean([d.consistent for d in pairs]) == pytest.approx(1)


@given(st.lists(st.tuples(st.sampled_from(["first", "second", "a", "b"]), st.sampled_from(["a", "b"])), min_size=1, max_size=20))
def test_s1_relabel_symmetry(spec):
    maj = majority([(f"q{i}", "a", "b", w) for i, (_, w) in enumerate(spec)])
    v = [r for i, (beh, _) in enumerate(spec) for r in dual(f"q{i}", "a", "b", beh)]
    # swap the a/b labels together with the order field; the verdict stays tied to the shown position
    swapped = [
        VerdictRecord(r.judge_id, r.criterion, r.prompt_id, r.model_b, r.model_a, "BA" if r.order == "AB" else "AB", r.verdict)
        for r in v
    ]
    a, b = s1_score(v, maj), s1_score(swapped, maj)
    assert a.macro_acc == b.macro_acc
    assert a.position_bias_rate == b.position_bias_rate


def test_missing_order_is_listed():
    v = dual("q0", "a", "b", "a") + dual("q1", "a", "b", "a")[:1]
    with pytest.raises(IncompleteVerdictsError, match="q1"):
        pair_verdicts(v)


def test_majority_from_panels():
    pn = make_panel([(1, 2), (1, 2), (2, 1), (2, 1)], prompt="q")
    pn3 = make_panel([(1, 2), (1, 2), (2, 1)], prompt="r")
    m = majority_from_panels([pn, pn3])
    assert m[("c", "q", frozenset(("i0", "i1")))] is None
    assert m[("c", "r", frozenset(("i0", "i1")))] == "i0"


def test_paraphrase_sigma():
    assert paraphrase_sigma({"c": {0: 0.5, 1: 0.5}}) == 0.0
    assert paraphrase_sigma({"c": {0: 0.4, 1: 0.6}}) == pytest.approx(0.1)
    accs = [0.5, 0.55, 0.6, 0.45, 0.52, 0.58, 0.49, 0.61]
    mean = sum(accs) / 8
    oracle = math.sqrt(sum((a - mean) ** 2 for a in accs) / 8)
    assert paraphrase_sigma({"c": dict(enumerate(accs)), "d": {0: 0.4, 1: 0.6}}) == pytest.approx((oracle + 0.1) / 2)
    with pytest.warns(UserWarning):
        assert paraphrase_sigma({"c": {0: 0.7}}) == 0.0


def test_score_judges_and_paraphrase_groups():
    maj = majority([(f"q{i}", "a", "b", "a") for i in range(4)])
    v = dual("q0", "a", "b", "a", para=0) + dual("q1", "a", "b", "b", para=0)
    v += dual("q2", "a", "b", "a", para=1) + dual("q3", "a", "b", "a", para=1)
    v += dual("q0", "a", "b", "first", judge="k")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = score_judges(v, {**maj})
    assert set(out) == {"j", "k"}
    assert out["j"].per_paraphrase_acc["c"] == {0: 0.5, 1: 1.0}
    assert out["j"].paraphrase_sigma == pytest.approx(0.25)


def test_parse_verdict_text():
    assert parse_verdict_text('```json\n{"choice": "A"}\n```') == "first-position"
    assert parse_verdict_text("I prefer image B.") == "second-position"
    assert parse_verdict_text("no idea") is None


def brute_spearman_p(x, y):
    def ranks(v):
        s = sorted(v)
        return [(2 * s.index(a) + s.count(a) + 1) / 2 for a in v]

    rx, ry = ranks(x), ranks(y)
    n = len(x)

    def rho(b):
        return np.corrcoef(rx, b)[0, 1]

    obs = rho(ry)
    hits = sum(abs(rho(list(p))) >= abs(obs) - 1e-12 for p in itertools.permutations(ry))
    return obs, hits / math.factorial(n)


@pytest.mark.parametrize("seed", range(12))
def test_spearman_exact_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 8))
    x = list(rng.integers(0, 5, n).astype(float)) if seed % 3 == 0 else list(rng.random(n))
    y = list(rng.random(n))
    if len(set(x)) == 1:
        x[0] += 1
    rho, p = spearman_rho(x, y, "exact")
    r2, p2 = brute_spearman_p(x, y)
    assert rho == pytest.approx(r2, abs=1e-12)
    assert p == pytest.approx(p2, abs=1e-12)


def test_spearman_basics():
    assert spearman_rho([1, 2, 3, 4], [10, 20, 30, 40])[0] == pytest.approx(1)
    assert spearman_rho([1, 2, 3, 4], [4, 3, 2, 1])[0] == pytest.approx(-1)
    with pytest.raises(ValueError):
        spearman_rho([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman_rho([1, 2], [1, 2])


def test_spearman_diagnostics_columns():
    rho, p_exact = spearman_rho(POS_BIAS, COND_ACC, "exact")
    assert rho == pytest.approx(0.9429, abs=1e-4)
    assert p_exact == pytest.approx(1 / 60)
    _, p_t = spearman_rho(POS_BIAS, COND_ACC, "t")
    assert round(p_t, 3) == 0.005
