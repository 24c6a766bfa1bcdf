"""Command-line surface: decode, align, and evaluate.

Subcommands read emission files plus side resources (tokens, lexicon,
ARPA LM), write JSON-lines records sorted by utterance id, and report
corpus metrics. Flag precedence is CLI > config file (``--config``,
JSON) > built-in defaults. The ``CTCFORGE_LOG`` environment variable
sets the log level.

Exit codes: 0 success, 1 when any utterance failed (others are still
processed), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .align import align_words, attribute_blanks, forced_align
from .decoder import DecoderOptions, beam_search_decode
from .emissions import TokenDictionary, load_emissions
from .lexicon import build_trie, parse_lexicon
from .lm import parse_arpa
from .metrics import edit_distance, oracle_wer, wer

log = logging.getLogger("ctcforge")

_UNSET = object()

EMISSION_SUFFIXES = (".ctce", ".bin", ".tsv")

DEFAULTS = {
    "emissions": None,
    "tokens": None,
    "lexicon": None,
    "lm": None,
    "refs": None,
    "hyps": None,
    "out": None,
    "figure": None,
    "beam_size": 10,
    "beam_size_token": None,
    "beam_threshold": 50.0,
    "lm_weight": 2.0,
    "word_score": 0.0,
    "sil_score": 0.0,
    "blank_skip_threshold": 1.0,
    "nbest": 1,
    "merge": "logadd",
    "workers": 1,
    "strict_validation": True,
    "blank_token": None,
    "silence_token": None,
    "attribute_blanks": False,
    "json": False,
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Merged view of flags, config file, and defaults for one command."""

    command: str
    emissions: str | None = None
    tokens: str | None = None
    lexicon: str | None = None
    lm: str | None = None
    refs: str | None = None
    hyps: str | None = None
    out: str | None = None
    figure: str | None = None
    beam_size: int = 10
    beam_size_token: int | None = None
    beam_threshold: float = 50.0
    lm_weight: float = 2.0
    word_score: float = 0.0
    sil_score: float = 0.0
    blank_skip_threshold: float = 1.0
    nbest: int = 1
    merge: str = "logadd"
    workers: int = 1
    strict_validation: bool = True
    blank_token: str | None = None
    silence_token: str | None = None
    attribute_blanks: bool = False
    json: bool = False

    def decoder_options(self) -> DecoderOptions:
        try:
            return DecoderOptions(
                beam_size=self.beam_size,
                beam_size_token=self.beam_size_token,
                beam_threshold=self.beam_threshold,
                lm_weight=self.lm_weight,
                word_score=self.word_score,
                sil_score=self.sil_score,
                blank_skip_threshold=self.blank_skip_threshold,
                n_best=self.nbest,
                merge_mode=self.merge,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"--{name.replace('_', '-')} is required")

    def check_paths(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(
                    f"--{name.replace('_', '-')}: file not found: {value}"
                )


def _merge_config(args: argparse.Namespace, command: str) -> RunConfig:
    merged = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path not in (None, _UNSET):
        try:
            file_values = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--config: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("--config: expected a JSON object")
        for key, value in file_values.items():
            if key not in DEFAULTS:
                raise ConfigError(f"--config: unknown key {key!r}")
            merged[key] = value
    for key in DEFAULTS:
        value = getattr(args, key, _UNSET)
        if value is not _UNSET:
            merged[key] = value
    return RunConfig(command=command, **merged)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _discover_utterances(emissions: str) -> list[tuple[str, Path]]:
    path = Path(emissions)
    if path.is_dir():
        files = sorted(
            p for p in path.iterdir() if p.suffix.lower() in EMISSION_SUFFIXES
        )
        if not files:
            raise ConfigError(
                f"--emissions: no {'/'.join(EMISSION_SUFFIXES)} files in {path}"
            )
        return [(p.stem, p) for p in files]
    return [(path.stem, path)]


def _load_tokens(cfg: RunConfig) -> TokenDictionary:
    try:
        return TokenDictionary.from_file(
            cfg.tokens, blank_token=cfg.blank_token, silence_token=cfg.silence_token
        )
    except ValueError as exc:
        raise ConfigError(f"--tokens: {exc}") from exc


def _read_refs(path: str) -> dict[str, list[str]]:
    """One utterance per line: "utt_id<TAB>word word word"."""
    refs: dict[str, list[str]] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        utt_id, _, rest = line.partition("\t")
        if not utt_id or not _:
            raise ConfigError(f"--refs: line {lineno}: expected 'utt_id<TAB>words'")
        refs[utt_id.strip()] = rest.split()
    return refs


def _dump_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def _open_out(path: str | None):
    if path is None:
        return sys.stdout
    return open(path, "w", encoding="utf-8")


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------

_WORKER: dict = {}


def _decode_init(cfg: RunConfig) -> None:
    tokens = _load_tokens(cfg)
    trie = None
    lm = None
    if cfg.lm is not None:
        lm = parse_arpa(cfg.lm)
    if cfg.lexicon is not None:
        lexicon = parse_lexicon(cfg.lexicon, tokens)
        trie = build_trie(lexicon, lm)
    _WORKER.update(
        tokens=tokens,
        trie=trie,
        lm=lm,
        opts=cfg.decoder_options(),
        strict=cfg.strict_validation,
    )


def _decode_one(utt_id: str, path: str) -> tuple[str, dict | None, float, str | None]:
    t0 = time.perf_counter()
    try:
        emissions = load_emissions(path, _WORKER["tokens"], strict=_WORKER["strict"])
        nbest = beam_search_decode(
            emissions,
            _WORKER["tokens"],
            _WORKER["opts"],
            lexicon=_WORKER["trie"],
            lm=_WORKER["lm"],
        )
    except Exception as exc:
        return utt_id, None, time.perf_counter() - t0, str(exc)
    tokens = _WORKER["tokens"]
    record = {
        "utt": utt_id,
        "nbest": [
            {
                "rank": rank,
                "score": hyp.score,
                "am_score": hyp.am_score,
                "lm_score": hyp.lm_score,
                "token_ids": hyp.tokens,
                "tokens": [tokens.tokens[i] for i in hyp.tokens],
                "words": hyp.words,
                "timesteps": hyp.timesteps,
            }
            for rank, hyp in enumerate(nbest)
        ],
    }
    return utt_id, record, time.perf_counter() - t0, None


def cmd_decode(cfg: RunConfig) -> int:
    cfg.require("emissions", "tokens", "out")
    cfg.check_paths("emissions", "tokens", "lexicon", "lm")
    cfg.decoder_options()
    utts = _discover_utterances(cfg.emissions)

    # Load side resources in the parent first so malformed files are a
    # config error, not a broken worker pool.
    try:
        _decode_init(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    results = []
    if cfg.workers > 1 and len(utts) > 1:
        with ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_decode_init, initargs=(cfg,)
        ) as pool:
            results = list(
                pool.map(_decode_one, [u for u, _ in utts], [str(p) for _, p in utts])
            )
    else:
        results = [_decode_one(utt_id, str(path)) for utt_id, path in utts]

    failed = []
    records = []
    times = {}
    for utt_id, record, elapsed, error in results:
        times[utt_id] = elapsed
        if error is not None:
            log.error("utterance %s failed: %s", utt_id, error)
            failed.append(utt_id)
        else:
            records.append(record)
    records.sort(key=lambda r: r["utt"])

    with open(cfg.out, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(_dump_record(record) + "\n")
    meta = {
        "command": "decode",
        "total_time_s": sum(times.values()),
        "utterances": {u: times[u] for u in sorted(times)},
        "failed": sorted(failed),
        "options": dataclasses.asdict(cfg.decoder_options()),
    }
    Path(cfg.out + ".meta").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    log.info("decoded %d utterances (%d failed)", len(records), len(failed))
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------


def cmd_align(cfg: RunConfig) -> int:
    cfg.require("emissions", "tokens", "refs")
    cfg.check_paths("emissions", "tokens", "refs", "lexicon")
    tokens = _load_tokens(cfg)
    lexicon = parse_lexicon(cfg.lexicon, tokens) if cfg.lexicon else None
    refs = _read_refs(cfg.refs)
    utts = _discover_utterances(cfg.emissions)

    failed = 0
    out = _open_out(cfg.out)
    try:
        for utt_id, path in utts:
            try:
                records = _align_one(cfg, tokens, lexicon, refs, utt_id, path)
            except Exception as exc:
                out.write(_dump_record({"utt": utt_id, "error": str(exc)}) + "\n")
                log.error("utterance %s failed: %s", utt_id, exc)
                failed += 1
                continue
            for record in records:
                out.write(_dump_record(record) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 1 if failed else 0


def _align_one(cfg, tokens, lexicon, refs, utt_id, path) -> list[dict]:
    if utt_id not in refs:
        raise ValueError(f"no transcript for {utt_id} in --refs")
    transcript = refs[utt_id]
    emissions = load_emissions(path, tokens, strict=cfg.strict_validation)
    if lexicon is not None:
        targets = []
        for word in transcript:
            variants = lexicon.entries.get(word)
            if not variants:
                raise ValueError(f"word {word!r} is not in the lexicon")
            targets.extend(variants[0])
    else:
        targets = [tokens.index(tok) for tok in transcript]

    result = forced_align(emissions, targets, tokens)
    spans = attribute_blanks(result) if cfg.attribute_blanks else result.spans
    records = [
        {
            "utt": utt_id,
            "token": tokens.tokens[span.token],
            "start": span.start_frame,
            "end": span.end_frame,
            "score": span.score,
            "prob": math.exp(span.score),
        }
        for span in spans
    ]
    if lexicon is not None:
        for ws in align_words(result, tokens, transcript, lexicon):
            records.append(
                {
                    "utt": utt_id,
                    "word": ws.word,
                    "start": ws.start_frame,
                    "end": ws.end_frame,
                    "score": ws.score,
                    "prob": math.exp(ws.score),
                }
            )
    return records


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _read_hyp_records(path: str) -> dict[str, dict]:
    records = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--hyps: line {lineno}: {exc}") from exc
        records[record["utt"]] = record
    return records


def _hyp_words(entry: dict) -> list[str]:
    # Lexicon-free decodes carry no words; fall back to token strings.
    return entry["words"] if entry["words"] else entry["tokens"]


def cmd_evaluate(cfg: RunConfig) -> int:
    cfg.require("refs", "hyps")
    cfg.check_paths("refs", "hyps")
    refs = _read_refs(cfg.refs)
    hyps = _read_hyp_records(cfg.hyps)

    missing = sorted(set(refs) - set(hyps))
    extra = sorted(set(hyps) - set(refs))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"no hypothesis for: {', '.join(missing[:5])}")
        if extra:
            parts.append(f"no reference for: {', '.join(extra[:5])}")
        raise ConfigError("unmatched utterance ids: " + "; ".join(parts))

    times = {}
    meta_path = Path(cfg.hyps + ".meta")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        times = meta.get("utterances", {})

    utt_ids = sorted(refs)
    ref_lists = [refs[u] for u in utt_ids]
    top1 = [_hyp_words(hyps[u]["nbest"][0]) for u in utt_ids]
    nbests = [
        [(_hyp_words(e), e["score"]) for e in hyps[u]["nbest"]] for u in utt_ids
    ]

    rows = []
    subs = ins = dels = 0
    for utt_id, ref, utt_nbest in zip(utt_ids, ref_lists, nbests):
        counts = edit_distance(ref, _hyp_words(hyps[utt_id]["nbest"][0]))
        subs += counts.substitutions
        ins += counts.insertions
        dels += counts.deletions
        oracle_d = min(
            edit_distance(ref, words).distance for words, _ in utt_nbest
        )
        ref_len = len(ref)
        rows.append(
            {
                "utt_id": utt_id,
                "ref_length": ref_len,
                "top1_errors": counts.distance,
                "top1_wer": 100.0 * counts.distance / ref_len if ref_len else 0.0,
                "oracle_errors": oracle_d,
                "oracle_wer": 100.0 * oracle_d / ref_len if ref_len else 0.0,
                "time_s": times.get(utt_id),
            }
        )

    try:
        summary = {
            "utterances": len(utt_ids),
            "wer": wer(ref_lists, top1),
            "oracle_wer": oracle_wer(ref_lists, nbests),
            "substitutions": subs,
            "insertions": ins,
            "deletions": dels,
            "ref_length": sum(len(r) for r in ref_lists),
            "decode_time_s": sum(times.values()) if times else None,
        }
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if cfg.out:
        from .report import write_per_utterance_tsv

        write_per_utterance_tsv(cfg.out, rows)
    if cfg.figure:
        from .report import render_report_figure

        render_report_figure(cfg.figure, summary, rows)

    if cfg.json:
        print(json.dumps(summary, sort_keys=True, indent=2))
    else:
        print(f"utterances:  {summary['utterances']}")
        print(
            f"WER:         {summary['wer']:.2f}%  "
            f"(sub {subs}, ins {ins}, del {dels} / {summary['ref_length']} ref words)"
        )
        print(f"oracle WER:  {summary['oracle_wer']:.2f}%")
        if summary["decode_time_s"] is not None:
            print(f"decode time: {summary['decode_time_s']:.2f} s")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=_UNSET, help="JSON config file")
    parser.add_argument("--tokens", default=_UNSET, help="token file, one per line")
    parser.add_argument(
        "--blank-token", default=_UNSET, dest="blank_token",
        help="blank token string (default: <blank>, then -)",
    )
    parser.add_argument(
        "--silence-token", default=_UNSET, dest="silence_token",
        help="silence token string (default: none)",
    )
    parser.add_argument(
        "--strict-validation",
        action=argparse.BooleanOptionalAction,
        default=_UNSET,
        dest="strict_validation",
        help="require emission rows to normalize (default: on)",
    )


def _add_decoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lexicon", default=_UNSET, help="lexicon file")
    parser.add_argument("--lm", default=_UNSET, help="ARPA n-gram LM")
    parser.add_argument("--beam-size", type=int, default=_UNSET, dest="beam_size")
    parser.add_argument(
        "--beam-size-token", type=int, default=_UNSET, dest="beam_size_token",
        help="max tokens considered per frame (default: full vocabulary)",
    )
    parser.add_argument(
        "--beam-threshold", type=float, default=_UNSET, dest="beam_threshold"
    )
    parser.add_argument("--lm-weight", type=float, default=_UNSET, dest="lm_weight")
    parser.add_argument("--word-score", type=float, default=_UNSET, dest="word_score")
    parser.add_argument("--sil-score", type=float, default=_UNSET, dest="sil_score")
    parser.add_argument(
        "--blank-skip-threshold",
        type=float,
        default=_UNSET,
        dest="blank_skip_threshold",
        help="drop frames with at least this blank probability (1.0 disables)",
    )
    parser.add_argument("--nbest", type=int, default=_UNSET)
    parser.add_argument("--merge", choices=["max", "logadd"], default=_UNSET)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctcforge",
        description="CTC decoding, forced alignment, and WER evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="beam-search decode emission files")
    _add_common(p)
    _add_decoder_flags(p)
    p.add_argument("--emissions", default=_UNSET, help="emission file or directory")
    p.add_argument("--out", default=_UNSET, help="output JSON-lines path (required)")
    p.add_argument("--workers", type=int, default=_UNSET)

    p = sub.add_parser("align", help="force-align transcripts to emissions")
    _add_common(p)
    p.add_argument("--emissions", default=_UNSET, help="emission file or directory")
    p.add_argument("--refs", default=_UNSET, help="transcripts: utt_id<TAB>words")
    p.add_argument(
        "--lexicon", default=_UNSET,
        help="word mode: spell transcript words through this lexicon",
    )
    p.add_argument("--out", default=_UNSET, help="output JSON-lines path (default: stdout)")
    p.add_argument(
        "--attribute-blanks",
        action=argparse.BooleanOptionalAction,
        default=_UNSET,
        dest="attribute_blanks",
        help="widen spans so blanks attach to the preceding token",
    )

    p = sub.add_parser("evaluate", help="score decode output against references")
    p.add_argument("--config", default=_UNSET, help="JSON config file")
    p.add_argument("--refs", default=_UNSET, help="references: utt_id<TAB>words")
    p.add_argument("--hyps", default=_UNSET, help="decode output JSON-lines")
    p.add_argument("--out", default=_UNSET, help="per-utterance TSV path")
    p.add_argument("--figure", default=_UNSET, help="render a summary figure (PNG/PDF)")
    p.add_argument("--json", action="store_true", default=_UNSET)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("CTCFORGE_LOG", "WARNING").upper()
    if not isinstance(getattr(logging, level, None), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args, args.command)
        if args.command == "decode":
            return cmd_decode(cfg)
        if args.command == "align":
            return cmd_align(cfg)
        return cmd_evaluate(cfg)
    except ConfigError as exc:
        print(f"ctcforge {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
