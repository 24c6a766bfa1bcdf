"""Frame-synchronous CTC beam search, lexicon-free and lexicon-constrained.

Both modes share one search loop. Hypotheses are kept in parallel numpy
arrays; each frame builds the candidate extensions as flat arrays (blank
keeps the prefix, a repeat of the last token without an intervening
blank keeps the prefix, anything else appends), merges candidates whose
(collapsed tokens, trie node, LM context, blank flag) coincide, and
prunes to the beam. Token and timestep histories are interned chains so
extending a hypothesis is O(1).

Shallow fusion: lexicon-free decoding scores each emitted token through
the n-gram model (token-level fusion); lexicon decoding scores completed
words, with max-smeared trie scores as in-word lookahead. Scores follow
``score = am + lm_weight * lm + word_score * n_words + sil_score * n_sil``
with ``lm`` kept unweighted so hypotheses can be rescored.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .emissions import EmissionMatrix, TokenDictionary, blank_collapse
from .lexicon import LexiconTrie
from .lm import NGramLM, context_finish, context_score, context_start

NEG_INF = float("-inf")
MERGE_MODES = ("logadd", "max")


@dataclass
class DecoderOptions:
    """Beam search knobs.

    ``beam_size_token`` limits how many tokens are considered per frame
    (None means the full vocabulary); ``blank_skip_threshold`` below 1.0
    drops blank-dominated frames before the search; ``beam_threshold``
    drops candidates scoring more than that far below the frame best.
    """

    beam_size: int = 10
    beam_size_token: int | None = None
    beam_threshold: float = 50.0
    lm_weight: float = 2.0
    word_score: float = 0.0
    sil_score: float = 0.0
    blank_skip_threshold: float = 1.0
    n_best: int = 1
    merge_mode: str = "logadd"

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.beam_size_token is not None and self.beam_size_token < 1:
            raise ValueError("beam_size_token must be >= 1")
        if not self.beam_threshold > 0:
            raise ValueError("beam_threshold must be positive")
        if not 0.0 < self.blank_skip_threshold <= 1.0:
            raise ValueError("blank_skip_threshold must be in (0, 1]")
        if not 1 <= self.n_best <= self.beam_size:
            raise ValueError("n_best must be in [1, beam_size]")
        if self.merge_mode not in MERGE_MODES:
            raise ValueError(f"merge_mode must be one of {MERGE_MODES}")


@dataclass
class Hypothesis:
    """One N-best entry.

    ``score = am_score + lm_weight * lm_score + word/sil bonuses``;
    ``timesteps[i]`` is the original frame where ``tokens[i]`` first
    appears (mapped through the emission frame_map).
    """

    tokens: list[int]
    words: list[str]
    am_score: float
    lm_score: float
    score: float
    timesteps: list[int]


@dataclass
class NBestList:
    """Hypotheses sorted by descending score, ties by token sequence."""

    hypotheses: list[Hypothesis] = field(default_factory=list)

    def __iter__(self):
        return iter(self.hypotheses)

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __getitem__(self, i):
        return self.hypotheses[i]


def beam_search_decode(
    emissions: EmissionMatrix,
    tokens: TokenDictionary,
    opts: DecoderOptions | None = None,
    lexicon: LexiconTrie | None = None,
    lm: NGramLM | None = None,
) -> NBestList:
    """Decode one utterance; see the module docstring for semantics.

    With a lexicon, non-blank extensions must follow a trie edge and
    completed words are emitted (trailing partial words are discarded at
    the end, keeping their tokens but no word). The silence token never
    advances the trie and collects ``sil_score`` per emission.
    """
    opts = opts if opts is not None else DecoderOptions()
    if emissions.num_frames == 0:
        raise ValueError("empty emissions")
    if emissions.vocab_size != len(tokens):
        raise ValueError(
            f"emissions have {emissions.vocab_size} columns but the token "
            f"dictionary has {len(tokens)} tokens"
        )
    if opts.beam_size_token is not None and opts.beam_size_token > emissions.vocab_size:
        raise ValueError(
            f"beam_size_token {opts.beam_size_token} exceeds vocabulary size "
            f"{emissions.vocab_size}"
        )
    if lexicon is not None and not lexicon.root.children:
        raise ValueError("lexicon mode with an empty trie")
    if opts.blank_skip_threshold < 1.0:
        emissions = blank_collapse(
            emissions, opts.blank_skip_threshold, tokens.blank_index
        )
    return _BeamSearch(emissions, tokens, opts, lexicon, lm).run()


def decode_batch(
    emissions: list[EmissionMatrix],
    tokens: TokenDictionary,
    opts: DecoderOptions | None = None,
    lexicon: LexiconTrie | None = None,
    lm: NGramLM | None = None,
    workers: int = 1,
) -> list[NBestList]:
    """Element-wise :func:`beam_search_decode`; errors carry the index.

    ``workers > 1`` decodes utterances in a process pool; results are
    returned in input order either way.
    """
    if workers <= 1 or len(emissions) <= 1:
        out = []
        for i, e in enumerate(emissions):
            try:
                out.append(beam_search_decode(e, tokens, opts, lexicon, lm))
            except Exception as exc:
                raise ValueError(f"utterance {i}: {exc}") from exc
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(beam_search_decode, e, tokens, opts, lexicon, lm)
            for e in emissions
        ]
        out = []
        for i, fut in enumerate(futures):
            try:
                out.append(fut.result())
            except Exception as exc:
                raise ValueError(f"utterance {i}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# search internals
# ---------------------------------------------------------------------------


class _TokenContexts:
    """Interned LM contexts with lazily built (state x token) tables.

    Used for token-level fusion in lexicon-free mode: row ``s`` holds the
    score and successor state of every token from context ``s``. Blank
    and silence rows are identity (no LM involvement).
    """

    def __init__(self, lm, token_strings, blank, sil):
        self.lm = lm
        self.token_strings = token_strings
        self.blank = blank
        self.sil = sil
        self.V = len(token_strings)
        self.ctxs: list[tuple[int, ...]] = []
        self.ctx_ids: dict[tuple[int, ...], int] = {}
        self.score_rows: list[np.ndarray | None] = []
        self.next_rows: list[np.ndarray | None] = []
        self._scores = None
        self._next = None
        self._dirty = True
        self.start = self.intern(context_start(lm))

    def intern(self, ctx: tuple[int, ...]) -> int:
        sid = self.ctx_ids.get(ctx)
        if sid is None:
            sid = len(self.ctxs)
            self.ctx_ids[ctx] = sid
            self.ctxs.append(ctx)
            self.score_rows.append(None)
            self.next_rows.append(None)
            self._dirty = True
        return sid

    def _ensure_rows(self, sids) -> None:
        for sid in sids:
            if self.score_rows[sid] is not None:
                continue
            ctx = self.ctxs[sid]
            sc = np.zeros(self.V)
            nx = np.full(self.V, sid, dtype=np.int64)
            for c, tok in enumerate(self.token_strings):
                if c == self.blank or c == self.sil:
                    continue
                nctx, s = context_score(self.lm, ctx, tok)
                sc[c] = s
                nx[c] = self.intern(nctx)
            self.score_rows[sid] = sc
            self.next_rows[sid] = nx
            self._dirty = True

    def set_fixed_cols(self, cols: np.ndarray) -> None:
        """Pre-restrict the tables to a fixed column set (full-vocab runs)."""
        self._fixed = cols
        self._fixed_scores = None
        self._fixed_next = None

    def gather(self, states: np.ndarray, cols: np.ndarray | None):
        self._ensure_rows(set(states.tolist()))
        if self._dirty:
            n = len(self.ctxs)
            sc = np.zeros((n, self.V))
            nx = np.tile(np.arange(n, dtype=np.int64)[:, None], (1, self.V))
            for i, row in enumerate(self.score_rows):
                if row is not None:
                    sc[i] = row
                    nx[i] = self.next_rows[i]
            self._scores = sc
            self._next = nx
            self._fixed_scores = None
            self._fixed_next = None
            self._dirty = False
        if cols is None:
            if self._fixed_scores is None:
                self._fixed_scores = np.ascontiguousarray(self._scores[:, self._fixed])
                self._fixed_next = np.ascontiguousarray(self._next[:, self._fixed])
            return self._fixed_scores[states], self._fixed_next[states]
        ix = np.ix_(states, cols)
        return self._scores[ix], self._next[ix]

    def finish(self, sid: int) -> float:
        return context_finish(self.lm, self.ctxs[sid])


class _WordContexts:
    """Interned LM contexts with a (state, word) -> (state, score) cache."""

    def __init__(self, lm, words):
        self.lm = lm
        self.words = words
        self.ctxs: list[tuple[int, ...]] = []
        self.ctx_ids: dict[tuple[int, ...], int] = {}
        self.cache: dict[tuple[int, int], tuple[int, float]] = {}
        self.start = self.intern(context_start(lm))

    def intern(self, ctx: tuple[int, ...]) -> int:
        sid = self.ctx_ids.get(ctx)
        if sid is None:
            sid = len(self.ctxs)
            self.ctx_ids[ctx] = sid
            self.ctxs.append(ctx)
        return sid

    def score(self, sid: int, wid: int) -> tuple[int, float]:
        key = (sid, wid)
        hit = self.cache.get(key)
        if hit is None:
            nctx, s = context_score(self.lm, self.ctxs[sid], self.words[wid])
            hit = (self.intern(nctx), s)
            self.cache[key] = hit
        return hit

    def finish(self, sid: int) -> float:
        return context_finish(self.lm, self.ctxs[sid])


class _BeamSearch:
    def __init__(self, emissions, tokens, opts, lexicon, lm):
        self.em = emissions.log_probs
        self.fmap = emissions.frame_map
        self.T, self.V = self.em.shape
        self.blank = tokens.blank_index
        self.sil = tokens.silence_index
        self.opts = opts
        self.K = opts.beam_size_token if opts.beam_size_token is not None else self.V
        self.w = opts.lm_weight
        self.logadd = opts.merge_mode == "logadd"
        self.lexicon = lexicon
        self.lm = lm

        if lexicon is not None:
            child = lexicon.child_matrix
            if child.shape[1] < self.V:
                child = np.pad(
                    child,
                    ((0, 0), (0, self.V - child.shape[1])),
                    constant_values=-1,
                )
            self.child = child
            self.node_words = lexicon.node_words
            self.has_words = np.array(
                [bool(ws) for ws in lexicon.node_words], dtype=bool
            )
            self.use_smear = lexicon.smeared and lm is not None
            # The root contributes no lookahead: entering a word adds the
            # child smear in full and completing removes the smear of the
            # node the word was reached from.
            eff = lexicon.smear.copy() if self.use_smear else np.zeros(
                lexicon.num_nodes
            )
            eff[0] = 0.0
            self.smear_eff = eff
            self.word_lm = _WordContexts(lm, lexicon.words) if lm else None
            self.token_lm = None
        else:
            self.child = None
            self.use_smear = False
            self.word_lm = None
            self.token_lm = (
                _TokenContexts(lm, tokens.tokens, self.blank, self.sil)
                if lm
                else None
            )

        # Interned prefixes: id 0 is the empty prefix.
        self.p_parent = [-1]
        self.p_token = [-1]
        self.child_table: dict[tuple[int, int], int] = {}
        # Timestep chains (token, original frame) and emitted-word chains.
        self.ts_parent: list[int] = []
        self.ts_token: list[int] = []
        self.ts_frame: list[int] = []
        self.wc_parent: list[int] = []
        self.wc_word: list[int] = []

        start_state = 0
        if self.token_lm is not None:
            start_state = self.token_lm.start
        elif self.word_lm is not None:
            start_state = self.word_lm.start
        self.h_score = np.zeros(1)
        self.h_lm = np.zeros(1)
        self.h_prefix = np.zeros(1, dtype=np.int64)
        self.h_parent = np.full(1, -1, dtype=np.int64)
        self.h_last = np.full(1, -1, dtype=np.int64)
        self.h_flag = np.ones(1, dtype=bool)
        self.h_state = np.full(1, start_state, dtype=np.int64)
        self.h_node = np.zeros(1, dtype=np.int64)
        # payload columns never enter array math; keep them as lists
        self.h_ts = [-1]
        self.h_wc = [-1]
        self.h_nwords = [0]
        self.h_nsils = [0]

        self._arangeV = np.arange(self.V)
        # Full-vocabulary runs reuse one fixed token selection per decode.
        self.full_vocab = self.K >= self.V
        if self.full_vocab:
            self._ck_full = self._arangeV[self._arangeV != self.blank]
            self._sil_col_full = (
                (self._ck_full == self.sil)
                if self.sil is not None
                else np.zeros(self._ck_full.size, bool)
            )
            self._sil_bonus_full = (
                np.where(self._sil_col_full, opts.sil_score, 0.0)
                if self._sil_col_full.any()
                else None
            )
            if self.token_lm is not None:
                self.token_lm.set_fixed_cols(self._ck_full)
            if self.child is not None:
                self._child_full = np.ascontiguousarray(
                    self.child[:, self._ck_full]
                )

    # -- helpers -----------------------------------------------------------

    def _prefix_tokens(self, parent: int, token: int) -> tuple[int, ...]:
        seq = []
        if token >= 0:
            seq.append(token)
        p = parent
        while p > 0:
            seq.append(self.p_token[p])
            p = self.p_parent[p]
        seq.reverse()
        return tuple(seq)

    def _ts_walk(self, ts: int) -> tuple[list[int], list[int]]:
        toks, frames = [], []
        while ts >= 0:
            toks.append(self.ts_token[ts])
            frames.append(self.ts_frame[ts])
            ts = self.ts_parent[ts]
        toks.reverse()
        frames.reverse()
        return toks, frames

    def _words_walk(self, wc: int) -> list[str]:
        out = []
        while wc >= 0:
            out.append(self.lexicon.words[self.wc_word[wc]])
            wc = self.wc_parent[wc]
        out.reverse()
        return out

    # -- per-frame step ------------------------------------------------------

    def _step(self, t: int) -> None:
        em = self.em[t]
        H = len(self.h_score)

        # token selection: top beam_size_token by emission (ties to the
        # lowest index); candidates are then enumerated in index order
        if self.full_vocab:
            has_blank = True
            ck = self._ck_full
            sil_col = self._sil_col_full
            sil_bonus = self._sil_bonus_full
            rep = (~self.h_flag) & (self.h_last >= 0)
        else:
            sel = np.sort(np.lexsort((self._arangeV, -em))[: self.K])
            selset = np.zeros(self.V, dtype=bool)
            selset[sel] = True
            has_blank = bool(selset[self.blank])
            ck = sel[sel != self.blank]
            sil_col = (
                (ck == self.sil)
                if self.sil is not None
                else np.zeros(ck.size, bool)
            )
            sil_bonus = (
                np.where(sil_col, self.opts.sil_score, 0.0)
                if sil_col.any()
                else None
            )
            # repeats are only possible when the last token was selected
            rep = (~self.h_flag) & (self.h_last >= 0)
            if rep.any():
                rep[rep] = selset[self.h_last[rep]]
        n_b = int(rep.sum())
        kc = ck.size

        # appends as a full H x kc grid; forbidden cells (a repeat of the
        # last token without an intervening blank, or no trie edge) get
        # score -inf and are dropped after the merge
        emc = em[ck]
        grid = self.h_score[:, None] + emc[None, :]
        if self.token_lm is not None:
            # silence and blank columns are identity rows in the tables
            dsc, dnx = self.token_lm.gather(
                self.h_state, None if self.full_vocab else ck
            )
            grid = grid + self.w * dsc
            lm_c = (self.h_lm[:, None] + dsc).ravel()
        if sil_bonus is not None:
            grid = grid + sil_bonus[None, :]
        if self.lexicon is not None:
            if self.full_vocab:
                child = self._child_full[self.h_node]
            else:
                child = self.child[np.ix_(self.h_node, ck)]
            if sil_bonus is not None:
                # silence never advances the trie
                child = np.where(sil_col[None, :], self.h_node[:, None], child)
            valid = child >= 0
            child_safe = np.where(valid, child, 0)
            if self.use_smear:
                dsm = (
                    self.smear_eff[child_safe]
                    - self.smear_eff[self.h_node][:, None]
                )
                grid = grid + self.w * dsm
                lm_c = (self.h_lm[:, None] + dsm).ravel()
            grid[~valid] = NEG_INF
            nd_c = child_safe.ravel()
        blocked = (ck[None, :] == self.h_last[:, None]) & ~self.h_flag[:, None]
        grid[blocked] = NEG_INF

        n_a = H if has_blank else 0
        n_c = H * kc
        n = n_a + n_b + n_c
        self._append_from = n_a + n_b
        arange_h = np.arange(H, dtype=np.int64)

        par = np.empty(n, dtype=np.int64)
        tok = np.empty(n, dtype=np.int64)
        flg = np.zeros(n, dtype=np.int64)
        st = np.empty(n, dtype=np.int64)
        nd = np.zeros(n, dtype=np.int64)
        score = np.empty(n)
        lmv = np.empty(n)
        src = np.empty(n, dtype=np.int64)

        if has_blank:
            par[:n_a] = self.h_parent
            tok[:n_a] = self.h_last
            flg[:n_a] = 1
            st[:n_a] = self.h_state
            nd[:n_a] = self.h_node
            score[:n_a] = self.h_score + em[self.blank]
            lmv[:n_a] = self.h_lm
            src[:n_a] = arange_h
        if n_b:
            sl = slice(n_a, n_a + n_b)
            par[sl] = self.h_parent[rep]
            tok[sl] = self.h_last[rep]
            st[sl] = self.h_state[rep]
            nd[sl] = self.h_node[rep]
            score[sl] = self.h_score[rep] + em[self.h_last[rep]]
            lmv[sl] = self.h_lm[rep]
            src[sl] = arange_h[rep]
        sl = slice(n_a + n_b, n)
        par[sl] = np.repeat(self.h_prefix, kc)
        tok[sl] = np.tile(ck, H)
        if self.token_lm is not None:
            st[sl] = dnx.ravel()
            lmv[sl] = lm_c
        else:
            st[sl] = np.repeat(self.h_state, kc)
            lmv[sl] = lm_c if self.use_smear else np.repeat(self.h_lm, kc)
        if self.lexicon is not None:
            nd[sl] = nd_c
        score[sl] = grid.ravel()
        src[sl] = np.repeat(arange_h, kc)

        # word completions at the reached node: reset to the root and
        # replace the partial-word smear with the true LM word score
        n_base = n
        comp_rows = ()
        if self.lexicon is not None:
            comp = valid & ~blocked & self.has_words[child_safe]
            if sil_bonus is not None:
                comp &= ~sil_col[None, :]
            if comp.any():
                c_par, c_tok, c_st = [], [], []
                c_score, c_lm, c_src, c_wid = [], [], [], []
                h_score_l = self.h_score.tolist()
                h_lm_l = self.h_lm.tolist()
                for r, i in zip(*np.nonzero(comp)):
                    r = int(r)
                    i = int(i)
                    u_eff = (
                        float(self.smear_eff[self.h_node[r]])
                        if self.use_smear
                        else 0.0
                    )
                    raw = h_score_l[r] + float(emc[i])
                    for w_id in self.node_words[int(child[r, i])]:
                        if self.word_lm is not None:
                            ns, s = self.word_lm.score(int(self.h_state[r]), w_id)
                            c_score.append(
                                raw + self.w * (s - u_eff) + self.opts.word_score
                            )
                            c_lm.append(h_lm_l[r] + (s - u_eff))
                            c_st.append(ns)
                        else:
                            c_score.append(raw + self.opts.word_score)
                            c_lm.append(h_lm_l[r])
                            c_st.append(0)
                        c_par.append(int(self.h_prefix[r]))
                        c_tok.append(int(ck[i]))
                        c_src.append(r)
                        c_wid.append(w_id)
                m = len(c_score)
                par = np.concatenate([par, np.array(c_par, dtype=np.int64)])
                tok = np.concatenate([tok, np.array(c_tok, dtype=np.int64)])
                flg = np.concatenate([flg, np.zeros(m, dtype=np.int64)])
                st = np.concatenate([st, np.array(c_st, dtype=np.int64)])
                nd = np.concatenate([nd, np.zeros(m, dtype=np.int64)])
                score = np.concatenate([score, np.array(c_score)])
                lmv = np.concatenate([lmv, np.array(c_lm)])
                src = np.concatenate([src, np.array(c_src, dtype=np.int64)])
                comp_rows = c_wid
                n += m

        # merge candidates sharing (prefix, flag, LM state, trie node);
        # the max-scoring branch supplies the payload (ties: first in
        # candidate order, which the stable key sort preserves)
        packed = self._pack_keys(par, tok, flg, st, nd)
        order = np.argsort(packed, kind="stable")
        sp = packed[order]
        boundary = np.empty(n, dtype=bool)
        boundary[0] = True
        np.not_equal(sp[1:], sp[:-1], out=boundary[1:])
        starts = np.flatnonzero(boundary)
        s_ord = score[order]
        grp_max = np.maximum.reduceat(s_ord, starts)
        counts = np.diff(np.append(starts, n))
        at_max = np.flatnonzero(s_ord == np.repeat(grp_max, counts))
        winners = order[at_max[np.searchsorted(at_max, starts)]]
        if self.logadd:
            merged = np.logaddexp.reduceat(s_ord, starts)
        else:
            merged = grp_max

        best = merged.max()
        if best == NEG_INF:
            raise ValueError(
                f"beam died at frame {t}: no extension survives "
                f"(beam_size_token={self.K} may be too small)"
            )
        keep = merged > NEG_INF
        if self.opts.beam_threshold != math.inf:
            keep &= merged >= best - self.opts.beam_threshold
        if not keep.all():
            winners = winners[keep]
            merged = merged[keep]
        ranked = self._rank(merged, par[winners], tok[winners], packed[winners])

        self._commit(
            t, merged[ranked], winners[ranked], par, tok, flg, st, nd=nd,
            lmv=lmv, src=src, n_base=n_base, comp_wids=comp_rows,
        )

    def _pack_keys(self, par, tok, flg, st, nd) -> np.ndarray:
        parts = [(tok + 1, self.V + 1), (flg, 2)]
        if self.lm is not None:
            parts.append((st, int(st.max()) + 1))
        if self.lexicon is not None:
            parts.append((nd, int(nd.max()) + 1))
        dims = [len(self.p_parent) + 1] + [d for _, d in parts]
        total_bits = sum(max(int(d) - 1, 1).bit_length() for d in dims)
        if total_bits <= 62:
            key = par + 1
            for col, dim in parts:
                key = key * dim + col
            return key
        stacked = np.stack([par, tok, flg, st, nd], axis=1)
        _, inv = np.unique(stacked, axis=0, return_inverse=True)
        return inv

    def _rank(self, scores, par, tok, packed) -> np.ndarray:
        """Top ``beam_size`` by descending score; ties by token sequence.

        Candidates tied on both score and sequence order by packed key.
        Only the boundary-straddling subset is ever sorted fully.
        """
        beam = self.opts.beam_size
        n = len(scores)
        if n > beam:
            kth = np.partition(scores, n - beam)[n - beam]
            cand = np.flatnonzero(scores >= kth)
        else:
            cand = np.arange(n)
        order = cand[np.argsort(-scores[cand], kind="stable")]
        s = scores[order]
        boundary = np.empty(len(s), dtype=bool)
        boundary[0] = True
        np.not_equal(s[1:], s[:-1], out=boundary[1:])
        run_starts = np.flatnonzero(boundary)
        run_ends = np.concatenate([run_starts[1:], [len(s)]])
        for a, b in zip(run_starts, run_ends):
            if b - a > 1:
                run_sorted = sorted(
                    order[a:b],
                    key=lambda i: (
                        self._prefix_tokens(int(par[i]), int(tok[i])),
                        int(packed[i]),
                    ),
                )
                order[a:b] = run_sorted
        return order[:beam]

    def _commit(
        self, t, merged, winners, par, tok, flg, st, nd, lmv, src, n_base, comp_wids
    ) -> None:
        frame = int(self.fmap[t])
        w_par = par[winners].tolist()
        w_tok = tok[winners].tolist()
        w_src = src[winners].tolist()
        w_idx = winners.tolist()
        old_ts = self.h_ts
        old_wc = self.h_wc
        old_nw = self.h_nwords
        old_ns = self.h_nsils
        table = self.child_table
        keydim = self.V + 1
        append_from = self._append_from

        prefixes, ts_ids, wc_ids, nwords, nsils = [], [], [], [], []
        for p, c, s, idx in zip(w_par, w_tok, w_src, w_idx):
            if c < 0:
                pid = 0
            else:
                key = p * keydim + c
                pid = table.get(key)
                if pid is None:
                    pid = len(self.p_parent)
                    table[key] = pid
                    self.p_parent.append(p)
                    self.p_token.append(c)
            prefixes.append(pid)
            if idx >= append_from:
                ts_ids.append(len(self.ts_parent))
                self.ts_parent.append(old_ts[s])
                self.ts_token.append(c)
                self.ts_frame.append(frame)
                nsils.append(old_ns[s] + (c == self.sil))
                if idx >= n_base:
                    wd = comp_wids[idx - n_base]
                    wc_ids.append(len(self.wc_parent))
                    self.wc_parent.append(old_wc[s])
                    self.wc_word.append(wd)
                    nwords.append(old_nw[s] + 1)
                else:
                    wc_ids.append(old_wc[s])
                    nwords.append(old_nw[s])
            else:
                ts_ids.append(old_ts[s])
                nsils.append(old_ns[s])
                wc_ids.append(old_wc[s])
                nwords.append(old_nw[s])

        self.h_score = np.asarray(merged, dtype=np.float64)
        self.h_lm = lmv[winners]
        self.h_flag = flg[winners].astype(bool)
        self.h_prefix = np.array(prefixes, dtype=np.int64)
        self.h_parent = np.array(w_par, dtype=np.int64)
        self.h_last = np.array(w_tok, dtype=np.int64)
        self.h_state = st[winners]
        self.h_node = nd[winners]
        self.h_ts = ts_ids
        self.h_wc = wc_ids
        self.h_nwords = nwords
        self.h_nsils = nsils

    # -- finalization --------------------------------------------------------

    def run(self) -> NBestList:
        for t in range(self.T):
            self._step(t)
        return self._finalize()

    def _finalize(self) -> NBestList:
        opts = self.opts
        entries: dict[tuple, dict] = {}
        order: list[tuple] = []
        for i in range(len(self.h_score)):
            score = float(self.h_score[i])
            lmv = float(self.h_lm[i])
            if self.use_smear:
                eff = float(self.smear_eff[self.h_node[i]])
                score -= self.w * eff
                lmv -= eff
            if self.lm is not None:
                if self.word_lm is not None:
                    fin = self.word_lm.finish(int(self.h_state[i]))
                else:
                    fin = self.token_lm.finish(int(self.h_state[i]))
                score += self.w * fin
                lmv += fin
            toks, frames = self._ts_walk(int(self.h_ts[i]))
            words = (
                self._words_walk(int(self.h_wc[i]))
                if self.lexicon is not None
                else []
            )
            key = (tuple(toks), tuple(words))
            entry = entries.get(key)
            if entry is None:
                entries[key] = {
                    "score": score,
                    "best": score,
                    "lm": lmv,
                    "timesteps": frames,
                    "nwords": int(self.h_nwords[i]),
                    "nsils": int(self.h_nsils[i]),
                }
                order.append(key)
            else:
                if self.logadd:
                    entry["score"] = float(np.logaddexp(entry["score"], score))
                else:
                    entry["score"] = max(entry["score"], score)
                if score > entry["best"]:
                    entry["best"] = score
                    entry["lm"] = lmv
                    entry["timesteps"] = frames

        ranked = sorted(order, key=lambda k: (-entries[k]["score"], k[0], k[1]))
        out = []
        for key in ranked[: opts.n_best]:
            e = entries[key]
            bonuses = (
                opts.word_score * e["nwords"] + opts.sil_score * e["nsils"]
            )
            lm_part = self.w * e["lm"] if self.lm is not None else 0.0
            out.append(
                Hypothesis(
                    tokens=list(key[0]),
                    words=list(key[1]),
                    am_score=e["score"] - lm_part - bonuses,
                    lm_score=e["lm"] if self.lm is not None else 0.0,
                    score=e["score"],
                    timesteps=list(e["timesteps"]),
                )
            )
        return NBestList(out)
