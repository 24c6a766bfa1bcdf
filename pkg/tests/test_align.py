import numpy as np
import pytest

from ctcforge import (
    EmissionMatrix,
    align_words,
    attribute_blanks,
    ctc_collapse,
    forced_align,
)
from ctcforge.lexicon import Lexicon
from helpers import peaked_emissions, random_emissions, simple_tokens
from oracles import exhaustive_alignment_best


def test_peaked_alignment():
    tok = simple_tokens(3)
    e = peaked_emissions([1, 0, 2], 3, peak=0.98)
    result = forced_align(e, [1, 2], tok)
    assert list(result.frame_labels) == [1, 0, 2]
    assert [(s.token, s.start_frame, s.end_frame) for s in result.spans] == [
        (1, 0, 1),
        (2, 2, 3),
    ]
    assert result.frame_scores[0] == pytest.approx(np.log(0.98))


def test_infeasible_repeat():
    tok = simple_tokens(3)
    e = random_emissions(np.random.default_rng(0), 1, 3)
    with pytest.raises(ValueError, match="infeasible"):
        forced_align(e, [1, 1], tok)


def test_feasibility_boundary_is_exact():
    rng = np.random.default_rng(4)
    tok = simple_tokens(4)
    for _ in range(30):
        L = int(rng.integers(1, 5))
        targets = [int(rng.integers(1, 4)) for _ in range(L)]
        repeats = sum(a == b for a, b in zip(targets, targets[1:]))
        need = L + repeats
        ok = forced_align(random_emissions(rng, need, 4), targets, tok)
        assert ctc_collapse(ok.frame_labels, 0) == targets
        if need > 1:
            with pytest.raises(ValueError, match="infeasible"):
                forced_align(random_emissions(rng, need - 1, 4), targets, tok)


def test_rejects_blank_and_out_of_range_targets():
    tok = simple_tokens(3)
    e = random_emissions(np.random.default_rng(0), 4, 3)
    with pytest.raises(ValueError, match="blank"):
        forced_align(e, [1, 0], tok)
    with pytest.raises(ValueError, match="range"):
        forced_align(e, [7], tok)
    with pytest.raises(ValueError, match="non-empty"):
        forced_align(e, [], tok)


def test_path_score_matches_exhaustive_enumeration():
    rng = np.random.default_rng(9)
    tok = simple_tokens(4)
    for _ in range(120):
        L = int(rng.integers(1, 4))
        targets = [int(rng.integers(1, 4)) for _ in range(L)]
        repeats = sum(a == b for a, b in zip(targets, targets[1:]))
        T = int(rng.integers(L + repeats, 9))
        e = random_emissions(rng, T, 4)
        result = forced_align(e, targets, tok)
        got = float(result.frame_scores.sum())
        expected = exhaustive_alignment_best(e.log_probs, targets, 0)
        assert got == pytest.approx(expected, abs=1e-9)
        assert ctc_collapse(result.frame_labels, 0) == targets


def sample_valid_path(rng, T, targets, blank):
    """Random valid state path through the blank-interleaved sequence."""
    z = [blank]
    for t in targets:
        z.extend([t, blank])
    S = len(z)

    def skip_ok(s_from, s_to):
        return z[s_to] != blank and z[s_to] != z[s_from]

    # minimal frames needed to reach a final state from each state
    mindist = [0] * S
    for s in range(S - 3, -1, -1):
        best = mindist[s + 1]
        if s + 2 < S and skip_ok(s, s + 2):
            best = min(best, mindist[s + 2])
        mindist[s] = 1 + best

    start_options = [s for s in ([0, 1] if S > 1 else [0]) if mindist[s] <= T - 1]
    s = start_options[int(rng.integers(0, len(start_options)))]
    states = [s]
    for t in range(1, T):
        remaining = T - 1 - t
        options = []
        for s2 in (s, s + 1, s + 2):
            if s2 >= S:
                continue
            if s2 == s + 2 and not skip_ok(s, s2):
                continue
            if mindist[s2] > remaining:
                continue
            options.append(s2)
        s = options[int(rng.integers(0, len(options)))]
        states.append(s)
    return [z[s] for s in states]


def test_viterbi_beats_sampled_paths():
    rng = np.random.default_rng(10)
    tok = simple_tokens(4)
    for _ in range(5):
        targets = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 4)))]
        repeats = sum(a == b for a, b in zip(targets, targets[1:]))
        T = int(rng.integers(len(targets) + repeats, 10))
        e = random_emissions(rng, T, 4)
        best = float(forced_align(e, targets, tok).frame_scores.sum())
        for _ in range(1000):
            labels = sample_valid_path(rng, T, targets, 0)
            score = sum(e.log_probs[t, labels[t]] for t in range(T))
            assert score <= best + 1e-9


def test_span_monotonicity_and_count():
    rng = np.random.default_rng(11)
    tok = simple_tokens(5)
    for _ in range(40):
        targets = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 5)))]
        repeats = sum(a == b for a, b in zip(targets, targets[1:]))
        T = int(rng.integers(len(targets) + repeats, 12))
        result = forced_align(random_emissions(rng, T, 5), targets, tok)
        assert [s.token for s in result.spans] == targets
        starts = [s.start_frame for s in result.spans]
        assert starts == sorted(starts)
        assert all(s.start_frame < s.end_frame for s in result.spans)


def test_earliest_transition_tie_break():
    # uniform rows make every feasible path equal; ties resolve to the
    # path whose advances happen earliest
    tok = simple_tokens(3)
    e = EmissionMatrix(np.log(np.full((3, 3), 1 / 3)))
    result = forced_align(e, [1], tok)
    assert list(result.frame_labels) == [1, 0, 0]


def test_attribute_blanks_tiles_frames():
    rng = np.random.default_rng(12)
    tok = simple_tokens(4)
    for _ in range(25):
        targets = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 4)))]
        repeats = sum(a == b for a, b in zip(targets, targets[1:]))
        T = int(rng.integers(len(targets) + repeats, 10))
        result = forced_align(random_emissions(rng, T, 4), targets, tok)
        tiled = attribute_blanks(result)
        assert tiled[0].start_frame == 0
        assert tiled[-1].end_frame == T
        for a, b in zip(tiled, tiled[1:]):
            assert a.end_frame == b.start_frame
        assert [s.token for s in tiled] == targets


def test_align_words_single_word():
    tok = simple_tokens(3)
    e = peaked_emissions([1, 2], 3, peak=0.98)
    result = forced_align(e, [1, 2], tok)
    lex = Lexicon(words=["ab"], entries={"ab": [(1, 2)]})
    spans = align_words(result, tok, ["ab"], lex)
    assert len(spans) == 1
    assert (spans[0].start_frame, spans[0].end_frame) == (0, 2)
    assert spans[0].word == "ab"


def test_align_words_boundary():
    tok = simple_tokens(3)
    e = peaked_emissions([1, 0, 2], 3, peak=0.98)
    result = forced_align(e, [1, 2], tok)
    lex = Lexicon(words=["a", "b"], entries={"a": [(1,)], "b": [(2,)]})
    spans = align_words(result, tok, ["a", "b"], lex)
    assert [(s.word, s.start_frame, s.end_frame) for s in spans] == [
        ("a", 0, 1),
        ("b", 2, 3),
    ]


def test_align_words_partition_oracle():
    rng = np.random.default_rng(13)
    tok = simple_tokens(5)
    letters = list(range(1, 5))
    for _ in range(30):
        n_words = int(rng.integers(1, 4))
        words, entries, transcript, targets = [], {}, [], []
        for i in range(n_words):
            sp = tuple(
                int(letters[int(rng.integers(0, 4))])
                for _ in range(int(rng.integers(1, 4)))
            )
            name = f"w{i}"
            words.append(name)
            entries[name] = [sp]
            transcript.append(name)
            targets.extend(sp)
        repeats = sum(a == b for a, b in zip(targets, targets[1:]))
        T = int(rng.integers(len(targets) + repeats, len(targets) + repeats + 8))
        result = forced_align(random_emissions(rng, T, 5), targets, tok)
        spans = align_words(result, tok, transcript, Lexicon(words, entries))
        # word spans cover exactly the token spans, in order
        pos = 0
        for ws, name in zip(spans, transcript):
            group = result.spans[pos : pos + len(entries[name][0])]
            pos += len(group)
            assert ws.start_frame == group[0].start_frame
            assert ws.end_frame == group[-1].end_frame
        assert pos == len(result.spans)


def test_align_words_mismatch():
    tok = simple_tokens(3)
    e = peaked_emissions([1, 2], 3, peak=0.98)
    result = forced_align(e, [1, 2], tok)
    lex = Lexicon(words=["a"], entries={"a": [(1,)]})
    with pytest.raises(ValueError, match="do not match"):
        align_words(result, tok, ["a"], lex)
    with pytest.raises(ValueError, match="not in the lexicon"):
        align_words(result, tok, ["zz"], lex)


def test_total_score_is_sum_of_frame_scores():
    rng = np.random.default_rng(14)
    tok = simple_tokens(4)
    e = random_emissions(rng, 8, 4)
    result = forced_align(e, [1, 2, 3], tok)
    per_frame = [e.log_probs[t, result.frame_labels[t]] for t in range(8)]
    assert float(result.frame_scores.sum()) == pytest.approx(sum(per_frame), abs=1e-12)
