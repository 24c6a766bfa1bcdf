import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctcforge import edit_distance, oracle_wer, wer
from oracles import naive_edit_distance

words = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=8)


def test_identity():
    counts = edit_distance(["a", "b", "c"], ["a", "b", "c"])
    assert (counts.substitutions, counts.insertions, counts.deletions) == (0, 0, 0)
    assert counts.ref_length == 3
    assert counts.distance == 0


def test_single_deletion():
    counts = edit_distance(["a", "b"], ["b"])
    assert counts.distance == 1
    assert counts.deletions == 1


def test_tie_prefers_substitutions():
    counts = edit_distance(["a", "b"], ["b", "c"])
    assert counts.distance == 2
    assert counts.substitutions == 2
    assert counts.insertions == counts.deletions == 0


def test_random_pairs_match_naive_recursion():
    rng = np.random.default_rng(0)
    alphabet = ["a", "b", "c", "d"]
    for _ in range(1000):
        ref = [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 9))]
        hyp = [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 9))]
        assert edit_distance(ref, hyp).distance == naive_edit_distance(ref, hyp)


@settings(max_examples=80, deadline=None)
@given(words, words)
def test_symmetry(a, b):
    assert edit_distance(a, b).distance == edit_distance(b, a).distance


@settings(max_examples=80, deadline=None)
@given(words, words, words)
def test_triangle_inequality(a, b, c):
    ab = edit_distance(a, b).distance
    bc = edit_distance(b, c).distance
    ac = edit_distance(a, c).distance
    assert ac <= ab + bc


def test_wer_identity():
    assert wer([["x", "y"]], [["x", "y"]]) == 0.0


def test_wer_one_third():
    assert wer([["a", "b", "c"]], [["a", "x", "c"]]) == pytest.approx(33.3333, abs=0.01)


def test_wer_pools_over_corpus():
    refs = [["a", "b", "c"], ["d"]]
    hyps = [["a", "x", "c"], ["d", "e"]]
    d1 = edit_distance(refs[0], hyps[0]).distance
    d2 = edit_distance(refs[1], hyps[1]).distance
    assert wer(refs, hyps) == pytest.approx(100.0 * (d1 + d2) / 4)


def test_wer_errors():
    with pytest.raises(ValueError, match="references"):
        wer([["a"]], [])
    with pytest.raises(ValueError, match="zero"):
        wer([[]], [["a"]])


def test_oracle_wer_perfect_when_ref_present():
    refs = [["a", "b"], ["c"]]
    nbests = [
        [(["x"], -1.0), (["a", "b"], -2.0)],
        [(["c"], -0.5), (["c", "c"], -0.1)],
    ]
    assert oracle_wer(refs, nbests) == 0.0


def test_oracle_wer_size_one_equals_top1():
    rng = np.random.default_rng(1)
    alphabet = ["a", "b", "c"]
    refs, nbests = [], []
    for _ in range(30):
        refs.append([alphabet[i] for i in rng.integers(0, 3, size=rng.integers(1, 6))])
        hyp = [alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 6))]
        nbests.append([(hyp, -1.0)])
    top1 = [nb[0][0] for nb in nbests]
    assert oracle_wer(refs, nbests) == pytest.approx(wer(refs, top1))


def test_oracle_wer_matches_brute_force_and_bounds_top1():
    rng = np.random.default_rng(2)
    alphabet = ["a", "b", "c", "d"]
    for _ in range(50):
        n = int(rng.integers(1, 5))
        refs, nbests = [], []
        for _ in range(n):
            refs.append(
                [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(1, 6))]
            )
            size = int(rng.integers(1, 5))
            nbests.append(
                [
                    (
                        [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 6))],
                        -float(k),
                    )
                    for k in range(size)
                ]
            )
        got = oracle_wer(refs, nbests)
        # brute force: best distance per utterance, pooled
        total = sum(
            min(edit_distance(r, h).distance for h, _ in nb)
            for r, nb in zip(refs, nbests)
        )
        expected = 100.0 * total / sum(len(r) for r in refs)
        assert got == pytest.approx(expected, abs=1e-12)
        top1 = [nb[0][0] for nb in nbests]
        assert got <= wer(refs, top1) + 1e-12


def test_oracle_wer_monotone_in_nbest_size():
    rng = np.random.default_rng(3)
    alphabet = ["a", "b", "c"]
    refs, full = [], []
    for _ in range(20):
        refs.append([alphabet[i] for i in rng.integers(0, 3, size=rng.integers(1, 6))])
        full.append(
            [
                ([alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 6))], -float(k))
                for k in range(5)
            ]
        )
    prev = None
    for size in range(1, 6):
        cur = oracle_wer(refs, [nb[:size] for nb in full])
        if prev is not None:
            assert cur <= prev + 1e-12
        prev = cur


def test_oracle_wer_empty_nbest_rejected():
    with pytest.raises(ValueError, match="empty N-best"):
        oracle_wer([["a"]], [[]])
