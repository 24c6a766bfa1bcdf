"""Shared fixtures and generators for the test suite."""

from __future__ import annotations

import numpy as np

from ctcforge import EmissionMatrix, TokenDictionary


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def random_emissions(rng, t, v, peaky: float = 1.0) -> EmissionMatrix:
    """Normalized random emissions; larger ``peaky`` concentrates rows."""
    return EmissionMatrix(log_softmax_rows(peaky * rng.normal(size=(t, v))))


def peaked_emissions(path: list[int], v: int, peak: float = 0.9) -> EmissionMatrix:
    """Rows that put ``peak`` mass on the given framewise path."""
    t = len(path)
    probs = np.full((t, v), (1.0 - peak) / (v - 1))
    probs[np.arange(t), path] = peak
    return EmissionMatrix(np.log(probs))


def simple_tokens(v: int, sil: bool = False) -> TokenDictionary:
    """Blank at 0, then letters a, b, c, ...; optional silence token '|'."""
    names = ["-"] + [chr(97 + i) for i in range(v - 1)]
    silence_index = None
    if sil:
        names[-1] = "|"
        silence_index = v - 1
    return TokenDictionary(tuple(names), blank_index=0, silence_index=silence_index)


def random_ngram_tables(rng, words: list[str], order: int, density: float = 0.5):
    """String-keyed log10 tables for the oracle and the ARPA writer.

    Every lower-order prefix of a stored n-gram exists, matching
    well-formed ARPA output.
    """
    vocab = ["<s>", "</s>", *words]
    tables = {1: {}}
    for w in vocab:
        logp = -99.0 if w == "<s>" else float(rng.uniform(-1.8, -0.2))
        tables[1][(w,)] = (round(logp, 6), round(float(rng.uniform(-0.9, -0.05)), 6))
    for n in range(2, order + 1):
        tables[n] = {}
        contexts = list(tables[n - 1])
        for ctx in contexts:
            if ctx[-1] == "</s>":
                continue
            for w in vocab:
                if w == "<s>":
                    continue
                if rng.random() < density:
                    backoff = (
                        0.0 if n == order else round(float(rng.uniform(-0.8, -0.05)), 6)
                    )
                    tables[n][ctx + (w,)] = (
                        round(float(rng.uniform(-2.0, -0.1)), 6),
                        backoff,
                    )
    return tables
