"""Pronunciation lexicons and the token trie that constrains word decoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .emissions import TokenDictionary
from .lm import NGramLM, context_score


class LexiconFormatError(ValueError):
    """A lexicon file line is malformed."""


@dataclass
class Lexicon:
    """word -> list of spellings, each spelling a tuple of token indices.

    ``words`` preserves first-seen file order; its positions are the word
    ids used by the trie.
    """

    words: list[str]
    entries: dict[str, list[tuple[int, ...]]]

    def word_id(self, word: str) -> int:
        return self.words.index(word)


class TrieNode:
    """One trie node: children keyed by token index, completed word ids."""

    __slots__ = ("children", "word_ids", "max_score")

    def __init__(self):
        self.children: dict[int, TrieNode] = {}
        self.word_ids: list[int] = []
        self.max_score: float | None = None


@dataclass
class LexiconTrie:
    """Token trie over all spellings, with optional max-smeared LM scores.

    Besides the node objects, the constructor lays the trie out flat
    (child matrix, per-node word lists, smear vector) so the decoder's
    vectorized loop can walk it with array indexing.
    """

    root: TrieNode
    words: list[str]
    smeared: bool
    num_nodes: int = 0
    child_matrix: np.ndarray = field(default=None, repr=False)
    node_words: list[list[int]] = field(default=None, repr=False)
    smear: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        nodes: list[TrieNode] = [self.root]
        queue = [self.root]
        while queue:
            node = queue.pop(0)
            for tok in sorted(node.children):
                child = node.children[tok]
                nodes.append(child)
                queue.append(child)
        self.num_nodes = len(nodes)
        width = 1 + max(
            (tok for node in nodes for tok in node.children), default=-1
        )
        ids = {id(n): i for i, n in enumerate(nodes)}
        child = np.full((self.num_nodes, max(width, 1)), -1, dtype=np.int64)
        for i, node in enumerate(nodes):
            for tok, c in node.children.items():
                child[i, tok] = ids[id(c)]
        self.child_matrix = child
        self.node_words = [list(n.word_ids) for n in nodes]
        self.smear = np.array(
            [n.max_score if n.max_score is not None else 0.0 for n in nodes],
            dtype=np.float64,
        )


def parse_lexicon(path: str | Path, tokens: TokenDictionary) -> Lexicon:
    """Parse "word token token ..." lines; '#' lines are comments.

    Multiple lines per word add pronunciation variants; an exact
    duplicate (word, spelling) pair is an error, as are unknown or empty
    spellings.
    """
    path = Path(path)
    index = {tok: i for i, tok in enumerate(tokens.tokens)}
    words: list[str] = []
    entries: dict[str, list[tuple[int, ...]]] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        word, spelling_toks = fields[0], fields[1:]
        if not spelling_toks:
            raise LexiconFormatError(f"{path}: line {lineno}: empty spelling")
        spelling = []
        for tok in spelling_toks:
            if tok not in index:
                raise LexiconFormatError(
                    f"{path}: line {lineno}: unknown spelling token {tok!r}"
                )
            spelling.append(index[tok])
        spelling = tuple(spelling)
        if word not in entries:
            entries[word] = []
            words.append(word)
        if spelling in entries[word]:
            raise LexiconFormatError(
                f"{path}: line {lineno}: duplicate spelling for {word!r}"
            )
        entries[word].append(spelling)
    return Lexicon(words=words, entries=entries)


def build_trie(lexicon: Lexicon, lm: NGramLM | None = None) -> LexiconTrie:
    """Build the spelling trie; with an LM, max-smear unigram scores.

    Smearing stores at each node the best unigram score over all words
    completable at or below it. Words absent from the LM vocabulary smear
    with the OOV penalty (or the <unk> unigram when the model has one).
    """
    root = TrieNode()
    for wid, word in enumerate(lexicon.words):
        for spelling in lexicon.entries[word]:
            node = root
            for tok in spelling:
                node = node.children.setdefault(tok, TrieNode())
            node.word_ids.append(wid)
    if lm is not None:
        unigram = [context_score(lm, (), w)[1] for w in lexicon.words]
        _smear(root, unigram)
    return LexiconTrie(root=root, words=list(lexicon.words), smeared=lm is not None)


def _smear(node: TrieNode, unigram: list[float]) -> float:
    best = max((unigram[w] for w in node.word_ids), default=float("-inf"))
    for child in node.children.values():
        best = max(best, _smear(child, unigram))
    node.max_score = best
    return best
