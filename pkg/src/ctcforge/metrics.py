"""Word-level edit distance, corpus WER, and N-best oracle WER."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class EditCounts:
    substitutions: int
    insertions: int
    deletions: int
    ref_length: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> EditCounts:
    """Minimal word-level Levenshtein alignment.

    Tie-breaking prefers substitutions, then deletions, then insertions;
    this affects only the breakdown, never the total distance.
    """
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row = dist[i]
        prev = dist[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ri != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(subs, ins, dels, n)


def wer(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]]) -> float:
    """Corpus-pooled WER percentage: 100 * sum(distances) / sum(ref lengths)."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    total = sum(edit_distance(r, h).distance for r, h in zip(refs, hyps))
    ref_len = sum(len(r) for r in refs)
    if ref_len == 0:
        raise ValueError("total reference length is zero")
    return 100.0 * total / ref_len


def oracle_wer(refs: Sequence[Sequence[str]], nbests: Sequence) -> float:
    """WER when each utterance picks its best N-best entry.

    Each element of ``nbests`` is an NBestList or any sequence of entries
    carrying ``words`` and ``score`` (attributes or a (words, score)
    pair). Distance ties go to the higher-scoring entry, which never
    changes the pooled result.
    """
    if len(refs) != len(nbests):
        raise ValueError(f"{len(refs)} references vs {len(nbests)} N-best lists")
    total = 0
    ref_len = 0
    for i, (ref, nbest) in enumerate(zip(refs, nbests)):
        entries = [_words_score(h) for h in nbest]
        if not entries:
            raise ValueError(f"utterance {i}: empty N-best list")
        best = min(
            entries, key=lambda ws: (edit_distance(ref, ws[0]).distance, -ws[1])
        )
        total += edit_distance(ref, best[0]).distance
        ref_len += len(ref)
    if ref_len == 0:
        raise ValueError("total reference length is zero")
    return 100.0 * total / ref_len


def _words_score(entry) -> tuple[list[str], float]:
    if hasattr(entry, "words"):
        return list(entry.words), float(entry.score)
    words, score = entry
    return list(words), float(score)
