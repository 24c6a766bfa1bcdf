"""CTC forced alignment: Viterbi over the blank-interleaved target sequence.

The target sequence [t1, .., tL] is expanded to
[blank, t1, blank, t2, .., blank]; each frame either stays in its state,
advances one state, or skips a blank (advancing two states, which is
forbidden into a blank or into a token equal to the one two states
back). The best path yields per-frame labels and scores, which are then
merged into per-token spans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emissions import EmissionMatrix, TokenDictionary
from .lexicon import Lexicon

NEG_INF = float("-inf")


@dataclass(frozen=True)
class AlignmentSpan:
    token: int
    start_frame: int
    end_frame: int  # exclusive
    score: float  # mean per-frame log-probability over the span


@dataclass(frozen=True)
class WordSpan:
    word: str
    start_frame: int
    end_frame: int  # exclusive
    score: float


@dataclass
class AlignmentResult:
    frame_labels: np.ndarray  # length T, token indices (blank allowed)
    frame_scores: np.ndarray  # length T, log-prob of the chosen label
    spans: list[AlignmentSpan]


def forced_align(
    emissions: EmissionMatrix,
    targets: list[int],
    tokens: TokenDictionary,
) -> AlignmentResult:
    """Globally best frame-to-target alignment.

    Backtracking ties prefer stay over advance-1 over advance-2, and the
    final blank over the final token, so transitions land as early as
    possible. Raises on an empty/blank-containing target or when the
    frame count cannot fit the target (T < L + adjacent repeats).
    """
    blank = tokens.blank_index
    lp = emissions.log_probs
    T, V = lp.shape
    targets = [int(t) for t in targets]
    if not targets:
        raise ValueError("targets must be non-empty")
    for t in targets:
        if t == blank:
            raise ValueError("targets must not contain the blank token")
        if not 0 <= t < V:
            raise ValueError(f"target token {t} out of range [0, {V})")
    L = len(targets)
    repeats = sum(a == b for a, b in zip(targets, targets[1:]))
    if T < L + repeats:
        raise ValueError(
            f"infeasible alignment: {T} frames cannot fit {L} targets "
            f"with {repeats} adjacent repeats (need at least {L + repeats})"
        )

    S = 2 * L + 1
    z = np.full(S, blank, dtype=np.int64)
    z[1::2] = targets
    # advance-2 goes token to next token; it is blocked when they are equal
    can_skip = np.zeros(S, dtype=bool)
    can_skip[3::2] = z[3::2] != z[1:-2:2]

    emit = lp[:, z]  # T x S
    alpha = np.full(S, NEG_INF)
    alpha[0] = emit[0, 0]
    if S > 1:
        alpha[1] = emit[0, 1]
    bp = np.zeros((T, S), dtype=np.int8)
    for t in range(1, T):
        stay = alpha
        adv1 = np.concatenate(([NEG_INF], alpha[:-1]))
        adv2 = np.concatenate(([NEG_INF, NEG_INF], alpha[:-2]))
        adv2 = np.where(can_skip, adv2, NEG_INF)
        best = stay.copy()
        choice = np.zeros(S, dtype=np.int8)
        m1 = adv1 > best
        best[m1] = adv1[m1]
        choice[m1] = 1
        m2 = adv2 > best
        best[m2] = adv2[m2]
        choice[m2] = 2
        alpha = best + emit[t]
        bp[t] = choice

    s = S - 1
    if S > 1 and alpha[S - 2] > alpha[S - 1]:
        s = S - 2
    if alpha[s] == NEG_INF:
        raise ValueError("no feasible alignment path")

    states = np.empty(T, dtype=np.int64)
    states[T - 1] = s
    for t in range(T - 1, 0, -1):
        s = s - bp[t, s]
        states[t - 1] = s
    frame_labels = z[states]
    frame_scores = lp[np.arange(T), frame_labels]
    return AlignmentResult(
        frame_labels=frame_labels,
        frame_scores=frame_scores,
        spans=_spans_from_labels(frame_labels, frame_scores, blank),
    )


def _spans_from_labels(
    labels: np.ndarray, scores: np.ndarray, blank: int
) -> list[AlignmentSpan]:
    spans = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            if labels[start] != blank:
                spans.append(
                    AlignmentSpan(
                        token=int(labels[start]),
                        start_frame=start,
                        end_frame=i,
                        score=float(scores[start:i].mean()),
                    )
                )
            start = i
    return spans


def attribute_blanks(result: AlignmentResult) -> list[AlignmentSpan]:
    """Presentation variant: widen spans so they tile [0, T).

    Blank frames are attributed to the preceding token span (leading
    blanks to the first span); span scores are recomputed over the
    widened ranges.
    """
    T = len(result.frame_labels)
    if not result.spans:
        return []
    out = []
    for i, span in enumerate(result.spans):
        start = 0 if i == 0 else out[-1].end_frame
        end = result.spans[i + 1].start_frame if i + 1 < len(result.spans) else T
        out.append(
            AlignmentSpan(
                token=span.token,
                start_frame=start,
                end_frame=end,
                score=float(result.frame_scores[start:end].mean()),
            )
        )
    return out


def align_words(
    result: AlignmentResult,
    tokens: TokenDictionary,
    transcript: list[str],
    lexicon: Lexicon,
) -> list[WordSpan]:
    """Group token spans into word spans.

    The concatenated spellings of the transcript (first variant per word)
    must equal the aligned target sequence.
    """
    spellings = []
    for word in transcript:
        variants = lexicon.entries.get(word)
        if not variants:
            raise ValueError(f"word {word!r} is not in the lexicon")
        spellings.append(variants[0])
    flat = [tok for sp in spellings for tok in sp]
    aligned = [span.token for span in result.spans]
    if flat != aligned:
        raise ValueError(
            "concatenated transcript spellings do not match the aligned targets"
        )
    out = []
    pos = 0
    for word, spelling in zip(transcript, spellings):
        group = result.spans[pos : pos + len(spelling)]
        pos += len(spelling)
        frames = sum(s.end_frame - s.start_frame for s in group)
        total = sum(
            float(result.frame_scores[s.start_frame : s.end_frame].sum())
            for s in group
        )
        out.append(
            WordSpan(
                word=word,
                start_frame=group[0].start_frame,
                end_frame=group[-1].end_frame,
                score=total / frames,
            )
        )
    return out
