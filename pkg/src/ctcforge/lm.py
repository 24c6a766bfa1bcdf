"""Backoff n-gram language models read from ARPA text.

All probabilities are converted from the file's log10 to natural log at
parse time so every score in this package shares one base. Scoring is
incremental: an :class:`LMState` carries the conditioning context between
words, which lets a decoder extend many hypotheses cheaply and merge the
ones whose contexts coincide.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

LN10 = math.log(10.0)

# Natural-log penalty for out-of-vocabulary words when the model has no
# <unk> entry: finite and strongly dispreferred so it cannot poison a
# beam with -inf.
OOV_PENALTY = -20.0

log = logging.getLogger(__name__)

_SECTION_RE = re.compile(r"\\(\d+)-grams:")
_COUNT_RE = re.compile(r"ngram\s+(\d+)\s*=\s*(\d+)")


class ArpaFormatError(ValueError):
    """The file is not well-formed ARPA text."""


@dataclass
class NGramLM:
    """Backoff model: per order, n-gram tuple -> (log-prob, backoff weight).

    ``tables[n]`` maps an n-tuple of word ids to ``(logprob, backoff)``,
    both natural-log; the highest order has backoff 0. ``vocab`` maps
    word strings to ids.
    """

    order: int
    tables: list[dict[tuple[int, ...], tuple[float, float]]]
    vocab: dict[str, int]

    @property
    def unk_id(self) -> int | None:
        return self.vocab.get("<unk>")


class LMState:
    """Incremental scoring state: context word ids plus a running total.

    States compare (and hash) by context only, so hypotheses whose
    conditioning histories coincide can be merged.
    """

    __slots__ = ("context", "cumulative_score")

    def __init__(self, context: tuple[int, ...] = (), cumulative_score: float = 0.0):
        self.context = tuple(context)
        self.cumulative_score = cumulative_score

    def __eq__(self, other) -> bool:
        return isinstance(other, LMState) and self.context == other.context

    def __hash__(self) -> int:
        return hash(self.context)

    def __repr__(self) -> str:
        return f"LMState(context={self.context}, cumulative_score={self.cumulative_score})"


def parse_arpa(path: str | Path, strict: bool = False) -> NGramLM:
    """Parse an ARPA file into an :class:`NGramLM`.

    Raises :class:`ArpaFormatError` on header/count mismatches or
    malformed lines (with the line number). N-grams whose context prefix
    is missing, as pruned models produce, are accepted with a warning;
    ``strict=True`` rejects them.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    n_lines = len(lines)

    i = 0
    while i < n_lines and lines[i].strip() != "\\data\\":
        i += 1
    if i == n_lines:
        raise ArpaFormatError(f"{path}: missing \\data\\ header")
    i += 1

    counts: dict[int, int] = {}
    while i < n_lines:
        s = lines[i].strip()
        if not s:
            i += 1
            continue
        m = _COUNT_RE.fullmatch(s)
        if m is None:
            break
        counts[int(m.group(1))] = int(m.group(2))
        i += 1
    if not counts:
        raise ArpaFormatError(f"{path}: no 'ngram N=count' lines after \\data\\")
    order = max(counts)

    vocab: dict[str, int] = {}
    tables: list[dict[tuple[int, ...], tuple[float, float]]] = [
        {} for _ in range(order + 1)
    ]
    seen_sections: set[int] = set()
    end_seen = False

    current_n = None
    for lineno in range(i, n_lines):
        s = lines[lineno].strip()
        if not s:
            continue
        if s == "\\end\\":
            end_seen = True
            current_n = None
            continue
        if end_seen:
            raise ArpaFormatError(f"{path}: line {lineno + 1}: content after \\end\\")
        m = _SECTION_RE.fullmatch(s)
        if m is not None:
            current_n = int(m.group(1))
            if current_n not in counts:
                raise ArpaFormatError(
                    f"{path}: line {lineno + 1}: section \\{current_n}-grams: "
                    f"was not declared in \\data\\"
                )
            if current_n in seen_sections:
                raise ArpaFormatError(
                    f"{path}: line {lineno + 1}: duplicate \\{current_n}-grams: section"
                )
            seen_sections.add(current_n)
            continue
        if current_n is None:
            raise ArpaFormatError(
                f"{path}: line {lineno + 1}: unexpected content outside a section"
            )
        n = current_n
        fields = s.split()
        if len(fields) not in (n + 1, n + 2) or (len(fields) == n + 2 and n == order):
            raise ArpaFormatError(
                f"{path}: line {lineno + 1}: malformed {n}-gram line"
            )
        try:
            logprob = float(fields[0]) * LN10
            backoff = float(fields[n + 1]) * LN10 if len(fields) == n + 2 else 0.0
        except ValueError:
            raise ArpaFormatError(
                f"{path}: line {lineno + 1}: malformed {n}-gram line"
            ) from None
        ids = tuple(vocab.setdefault(w, len(vocab)) for w in fields[1 : n + 1])
        tables[n][ids] = (logprob, backoff)

    if not end_seen:
        raise ArpaFormatError(f"{path}: missing \\end\\")
    for n, declared in sorted(counts.items()):
        if n not in seen_sections and declared > 0:
            raise ArpaFormatError(f"{path}: missing \\{n}-grams: section")
        actual = len(tables[n])
        if actual != declared:
            raise ArpaFormatError(
                f"{path}: \\data\\ declares {declared} {n}-grams, file has {actual}"
            )

    missing_prefix = 0
    for n in range(2, order + 1):
        for ng in tables[n]:
            if ng[:-1] not in tables[n - 1]:
                missing_prefix += 1
    if missing_prefix:
        msg = (
            f"{path}: {missing_prefix} n-grams have no lower-order context entry "
            f"(pruned model?)"
        )
        if strict:
            raise ArpaFormatError(msg)
        log.warning(msg)

    return NGramLM(order=order, tables=tables, vocab=vocab)


# -- context-level scoring ------------------------------------------------
#
# These operate on bare context tuples; the LMState wrappers below are the
# public incremental API. The decoder uses the tuple form directly so it
# can intern contexts as integers.


def context_start(lm: NGramLM) -> tuple[int, ...]:
    sid = lm.vocab.get("<s>")
    if sid is None or lm.order == 1:
        return ()
    return _shrink_to_known(lm, (sid,))


def context_score(
    lm: NGramLM, context: tuple[int, ...], word: str
) -> tuple[tuple[int, ...], float]:
    """Score ``word`` after ``context``; return (next context, score)."""
    wid = lm.vocab.get(word)
    if wid is None:
        wid = lm.unk_id
        if wid is None:
            return (), OOV_PENALTY
    score = _backoff_score(lm, context, wid)
    if lm.order == 1:
        return (), score
    nxt = _shrink_to_known(lm, (context + (wid,))[-(lm.order - 1):])
    return nxt, score


def context_finish(lm: NGramLM, context: tuple[int, ...]) -> float:
    return context_score(lm, context, "</s>")[1]


def _backoff_score(lm: NGramLM, context: tuple[int, ...], wid: int) -> float:
    ctx = context[-(lm.order - 1):] if lm.order > 1 else ()
    acc = 0.0
    while True:
        ng = ctx + (wid,)
        entry = lm.tables[len(ng)].get(ng)
        if entry is not None:
            return acc + entry[0]
        if not ctx:
            # Word seen only in higher orders of a malformed model.
            return acc + OOV_PENALTY
        ctx_entry = lm.tables[len(ctx)].get(ctx)
        if ctx_entry is not None:
            acc += ctx_entry[1]
        ctx = ctx[1:]


def _shrink_to_known(lm: NGramLM, ctx: tuple[int, ...]) -> tuple[int, ...]:
    # Contexts absent from the model cannot influence future scores
    # (their extensions and backoff weights do not exist), so dropping
    # them lets more hypotheses merge.
    while ctx and ctx not in lm.tables[len(ctx)]:
        ctx = ctx[1:]
    return ctx


# -- public incremental API ------------------------------------------------


def lm_start(lm: NGramLM) -> LMState:
    """State conditioned on the sentence start."""
    return LMState(context_start(lm), 0.0)


def lm_score(lm: NGramLM, state: LMState, word: str) -> tuple[LMState, float]:
    """Standard backoff score of ``word`` given ``state``.

    Out-of-vocabulary words map to ``<unk>`` when present, otherwise score
    the fixed :data:`OOV_PENALTY`.
    """
    nxt, score = context_score(lm, state.context, word)
    return LMState(nxt, state.cumulative_score + score), score


def lm_finish(lm: NGramLM, state: LMState) -> float:
    """Score of the sentence-end symbol in ``state``."""
    return context_finish(lm, state.context)
