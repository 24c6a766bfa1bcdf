"""ctcforge: model-agnostic CTC inference toolkit.

Decoding (greedy and beam search with n-gram shallow fusion), forced
alignment, and WER / N-best oracle WER evaluation over emission matrices
produced by any CTC-trained acoustic model.
"""

from .align import (
    AlignmentResult,
    AlignmentSpan,
    WordSpan,
    align_words,
    attribute_blanks,
    forced_align,
)
from .decoder import (
    DecoderOptions,
    Hypothesis,
    NBestList,
    beam_search_decode,
    decode_batch,
)
from .emissions import (
    EmissionMatrix,
    EmissionFormatError,
    TokenDictionary,
    blank_collapse,
    ctc_collapse,
    greedy_decode,
    load_emissions,
    write_emissions,
)
from .lexicon import (
    Lexicon,
    LexiconFormatError,
    LexiconTrie,
    build_trie,
    parse_lexicon,
)
from .lm import (
    ArpaFormatError,
    LMState,
    NGramLM,
    lm_finish,
    lm_score,
    lm_start,
    parse_arpa,
)
from .metrics import EditCounts, edit_distance, oracle_wer, wer

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "AlignmentSpan",
    "ArpaFormatError",
    "DecoderOptions",
    "EditCounts",
    "EmissionFormatError",
    "EmissionMatrix",
    "Hypothesis",
    "Lexicon",
    "LexiconFormatError",
    "LexiconTrie",
    "LMState",
    "NBestList",
    "NGramLM",
    "TokenDictionary",
    "WordSpan",
    "align_words",
    "attribute_blanks",
    "beam_search_decode",
    "blank_collapse",
    "build_trie",
    "ctc_collapse",
    "decode_batch",
    "edit_distance",
    "forced_align",
    "greedy_decode",
    "lm_finish",
    "lm_score",
    "lm_start",
    "load_emissions",
    "oracle_wer",
    "parse_arpa",
    "parse_lexicon",
    "wer",
    "write_emissions",
]
