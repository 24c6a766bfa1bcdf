import logging
import math

import numpy as np
import pytest

from ctcforge import ArpaFormatError, LMState, lm_finish, lm_score, lm_start, parse_arpa
from ctcforge.lm import OOV_PENALTY
from helpers import random_ngram_tables
from oracles import LN10, arpa_text, katz_sentence


def write_arpa(tmp_path, tables, order, name="lm.arpa"):
    p = tmp_path / name
    p.write_text(arpa_text(tables, order))
    return p


UNIGRAM_ONLY = """\\data\\
ngram 1=4

\\1-grams:
-0.30103\ta
-0.60206\tb
-99\t<s>
-0.5\t</s>

\\end\\
"""


def test_unigram_log10_conversion(tmp_path):
    p = tmp_path / "uni.arpa"
    p.write_text(UNIGRAM_ONLY)
    lm = parse_arpa(p)
    assert lm.order == 1
    state = lm_start(lm)
    _, score = lm_score(lm, state, "a")
    assert score == pytest.approx(math.log(10 ** -0.30103), abs=1e-12)
    assert score == pytest.approx(math.log(0.5), abs=1e-4)


def test_count_mismatch(tmp_path):
    text = UNIGRAM_ONLY.replace("ngram 1=4", "ngram 1=3")
    p = tmp_path / "bad.arpa"
    p.write_text(text)
    with pytest.raises(ArpaFormatError, match="declares 3"):
        parse_arpa(p)


def test_malformed_line_reports_number(tmp_path):
    text = UNIGRAM_ONLY.replace("-0.60206\tb", "not-a-number b")
    p = tmp_path / "bad.arpa"
    p.write_text(text)
    with pytest.raises(ArpaFormatError, match="line 6"):
        parse_arpa(p)


def test_missing_end(tmp_path):
    p = tmp_path / "bad.arpa"
    p.write_text(UNIGRAM_ONLY.replace("\\end\\", ""))
    with pytest.raises(ArpaFormatError, match="end"):
        parse_arpa(p)


def test_missing_data_header(tmp_path):
    p = tmp_path / "bad.arpa"
    p.write_text("\\1-grams:\n-0.1\ta\n\\end\\\n")
    with pytest.raises(ArpaFormatError, match="data"):
        parse_arpa(p)


def test_one_step_backoff_by_hand(tmp_path):
    tables = {
        1: {
            ("<s>",): (-99.0, 0.0),
            ("</s>",): (-0.9, 0.0),
            ("a",): (-0.4, -0.2),
            ("c",): (-0.5, 0.0),
        },
        2: {("a", "a"): (-0.3, 0.0), ("<s>", "a"): (-0.25, 0.0)},
    }
    lm = parse_arpa(write_arpa(tmp_path, tables, 2))
    state = LMState(context=(lm.vocab["a"],))
    _, score = lm_score(lm, state, "c")
    # "a c" absent: backoff(a) + unigram(c) = ln(10) * (-0.2 - 0.5)
    assert score == pytest.approx(LN10 * -0.7, abs=1e-12)


def test_oov_penalty_without_unk(tmp_path):
    p = tmp_path / "uni.arpa"
    p.write_text(UNIGRAM_ONLY)
    lm = parse_arpa(p)
    state, score = lm_score(lm, lm_start(lm), "zulu")
    assert score == OOV_PENALTY
    assert state.context == ()


def test_oov_maps_to_unk(tmp_path):
    tables = {
        1: {
            ("<s>",): (-99.0, 0.0),
            ("</s>",): (-0.9, 0.0),
            ("<unk>",): (-1.5, 0.0),
            ("a",): (-0.4, 0.0),
        }
    }
    lm = parse_arpa(write_arpa(tmp_path, tables, 1))
    _, score = lm_score(lm, lm_start(lm), "zulu")
    assert score == pytest.approx(-1.5 * LN10, abs=1e-12)


def test_lm_start_conditions_on_sentence_start(tmp_path):
    tables = {
        1: {("<s>",): (-99.0, -0.1), ("</s>",): (-0.9, 0.0), ("a",): (-0.4, 0.0)},
        2: {("<s>", "a"): (-0.2, 0.0)},
    }
    lm = parse_arpa(write_arpa(tmp_path, tables, 2))
    state = lm_start(lm)
    assert state.context == (lm.vocab["<s>"],)
    assert state.cumulative_score == 0.0
    _, score = lm_score(lm, state, "a")
    assert score == pytest.approx(-0.2 * LN10, abs=1e-12)
    assert lm_start(lm) == lm_start(lm)


def test_state_equality_is_context_only():
    assert LMState((1, 2), 0.0) == LMState((1, 2), -5.0)
    assert hash(LMState((1, 2), 0.0)) == hash(LMState((1, 2), -5.0))
    assert LMState((1,), 0.0) != LMState((2,), 0.0)


def test_unigram_start_context_is_empty(tmp_path):
    p = tmp_path / "uni.arpa"
    p.write_text(UNIGRAM_ONLY)
    lm = parse_arpa(p)
    assert lm_start(lm).context == ()


def test_finish_is_end_symbol_score(tmp_path):
    p = tmp_path / "uni.arpa"
    p.write_text(UNIGRAM_ONLY)
    lm = parse_arpa(p)
    state = lm_start(lm)
    assert lm_finish(lm, state) == pytest.approx(-0.5 * LN10, abs=1e-12)
    assert lm_finish(lm, state) == lm_finish(lm, state)


@pytest.mark.parametrize("order", [2, 3])
def test_sentence_scores_match_katz_oracle(tmp_path, order):
    rng = np.random.default_rng(order)
    words = ["the", "cat", "sat", "on", "mat"]
    tables = random_ngram_tables(rng, words, order=order, density=0.55)
    lm = parse_arpa(write_arpa(tmp_path, tables, order))
    for trial in range(60):
        n = int(rng.integers(1, 7))
        sent = [words[int(rng.integers(0, len(words)))] for _ in range(n)]
        state = lm_start(lm)
        total = 0.0
        for w in sent:
            state, s = lm_score(lm, state, w)
            assert len(state.context) <= lm.order - 1
            total += s
        total += lm_finish(lm, state)
        expected = katz_sentence(tables, order, sent) * LN10
        assert total == pytest.approx(expected, abs=1e-9), (trial, sent)


def test_cumulative_score_accumulates(tmp_path):
    rng = np.random.default_rng(0)
    tables = random_ngram_tables(rng, ["x", "y"], order=2, density=1.0)
    lm = parse_arpa(write_arpa(tmp_path, tables, 2))
    state = lm_start(lm)
    state, s1 = lm_score(lm, state, "x")
    state, s2 = lm_score(lm, state, "y")
    assert state.cumulative_score == pytest.approx(s1 + s2, abs=1e-12)


def test_missing_prefix_warns_and_strict_rejects(tmp_path, caplog):
    tables = {
        1: {("<s>",): (-99.0, 0.0), ("</s>",): (-0.9, 0.0), ("a",): (-0.4, -0.2)},
        2: {("b", "a"): (-0.3, 0.0)},  # context "b" has no unigram
    }
    p = write_arpa(tmp_path, tables, 2)
    with caplog.at_level(logging.WARNING):
        parse_arpa(p)
    assert any("lower-order" in rec.message for rec in caplog.records)
    with pytest.raises(ArpaFormatError, match="lower-order"):
        parse_arpa(p, strict=True)


def test_backoff_defaults_to_zero(tmp_path):
    # "a" carries no backoff field; "a c" is absent so scoring falls
    # straight through to the unigram
    text = (
        "\\data\\\nngram 1=4\nngram 2=1\n\n"
        "\\1-grams:\n-99\t<s>\n-0.9\t</s>\n-0.4\ta\n-0.5\tc\n\n"
        "\\2-grams:\n-0.3\ta a\n\n\\end\\\n"
    )
    p = tmp_path / "lm.arpa"
    p.write_text(text)
    lm = parse_arpa(p)
    state = LMState(context=(lm.vocab["a"],))
    _, score = lm_score(lm, state, "c")
    assert score == pytest.approx(-0.5 * LN10, abs=1e-12)
