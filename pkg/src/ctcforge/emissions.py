"""Emission matrices and frame-level preprocessing.

Decoders and aligners in this package consume a T x V matrix of
natural-log token probabilities plus a token inventory designating the
CTC blank (and optionally a silence token). This module loads and
validates those matrices, implements greedy decoding as the cheap
baseline, and implements blank-dominated frame skipping.
"""

from __future__ import annotations

import struct
from dataclasses import InitVar, dataclass
from pathlib import Path

import numpy as np

BINARY_MAGIC = b"CTCE"
BINARY_VERSION = 1

# Log-probabilities may poke above 0 by float dust only; strict mode
# additionally requires every row to normalize in log space.
MAX_LOG_PROB = 1e-4
ROW_NORM_TOL = 1e-3

# A frame is skipped when its blank probability reaches
# threshold - BLANK_SKIP_EPS; the epsilon keeps rows sitting exactly on
# the threshold on the drop side.
BLANK_SKIP_EPS = 1e-12


class EmissionFormatError(ValueError):
    """An emission file does not match the binary or TSV layout."""


@dataclass
class TokenDictionary:
    """Acoustic token inventory with a designated blank.

    ``tokens[i]`` is the string for token index ``i``. ``blank_index``
    must always be set; ``silence_index`` is optional and must differ
    from the blank.
    """

    tokens: tuple[str, ...]
    blank_index: int
    silence_index: int | None = None

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        if not self.tokens:
            raise ValueError("token dictionary is empty")
        if any(not t for t in self.tokens):
            raise ValueError("token strings must be non-empty")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("token strings must be unique")
        if not 0 <= self.blank_index < len(self.tokens):
            raise ValueError(f"blank_index {self.blank_index} out of range")
        if self.silence_index is not None:
            if not 0 <= self.silence_index < len(self.tokens):
                raise ValueError(f"silence_index {self.silence_index} out of range")
            if self.silence_index == self.blank_index:
                raise ValueError("silence_index must differ from blank_index")

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise KeyError(f"unknown token: {token!r}") from None

    @classmethod
    def from_file(
        cls,
        path: str | Path,
        blank_token: str | None = None,
        silence_token: str | None = None,
    ) -> "TokenDictionary":
        """Read one token per line; index equals the zero-based line number.

        When ``blank_token`` is not given, the blank is the token named
        ``<blank>``, or ``-`` as a fallback.
        """
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        tokens = []
        for lineno, raw in enumerate(lines, start=1):
            tok = raw.strip()
            if not tok:
                raise EmissionFormatError(f"{path}: line {lineno}: empty token")
            tokens.append(tok)
        if blank_token is not None:
            candidates = [blank_token]
        else:
            candidates = ["<blank>", "-"]
        blank_index = None
        for cand in candidates:
            if cand in tokens:
                blank_index = tokens.index(cand)
                break
        if blank_index is None:
            raise EmissionFormatError(
                f"{path}: no blank token found (looked for {', '.join(candidates)})"
            )
        silence_index = None
        if silence_token is not None:
            if silence_token not in tokens:
                raise EmissionFormatError(
                    f"{path}: silence token {silence_token!r} not in token file"
                )
            silence_index = tokens.index(silence_token)
        return cls(tuple(tokens), blank_index, silence_index)


@dataclass
class EmissionMatrix:
    """T x V natural-log probabilities with a map back to original frames.

    ``frame_map[t]`` is the original frame index of row ``t``; it is the
    identity until frames are dropped by :func:`blank_collapse`.
    """

    log_probs: np.ndarray
    frame_map: np.ndarray | None = None
    strict: InitVar[bool] = True

    def __post_init__(self, strict: bool):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 2:
            raise ValueError(f"log_probs must be 2-D, got shape {lp.shape}")
        self.log_probs = np.ascontiguousarray(lp)
        bad = ~np.isfinite(lp)
        if bad.any():
            t, v = np.argwhere(bad)[0]
            raise ValueError(f"non-finite log-probability at frame {t}, token {v}")
        if lp.size and lp.max() > MAX_LOG_PROB:
            t, v = np.argwhere(lp > MAX_LOG_PROB)[0]
            raise ValueError(
                f"log-probability above 0 at frame {t}, token {v}: {lp[t, v]:.6g}"
            )
        if strict and lp.size:
            norms = _logsumexp_rows(lp)
            off = np.abs(norms) > ROW_NORM_TOL
            if off.any():
                t = int(np.argmax(off))
                raise ValueError(
                    f"frame {t} is not normalized: log-sum-exp = {norms[t]:.6g} "
                    f"(tolerance {ROW_NORM_TOL}); pass strict=False to skip this check"
                )
        if self.frame_map is None:
            fm = np.arange(lp.shape[0], dtype=np.int64)
        else:
            fm = np.asarray(self.frame_map, dtype=np.int64)
            if fm.shape != (lp.shape[0],):
                raise ValueError("frame_map length must equal the number of frames")
            if fm.size > 1 and not (np.diff(fm) > 0).all():
                raise ValueError("frame_map must be strictly increasing")
        self.frame_map = fm

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.log_probs.shape[1]

    def has_identity_frame_map(self) -> bool:
        return bool(
            self.frame_map.size == self.num_frames
            and (self.frame_map == np.arange(self.num_frames)).all()
        )


def _logsumexp_rows(lp: np.ndarray) -> np.ndarray:
    m = lp.max(axis=1)
    return m + np.log(np.exp(lp - m[:, None]).sum(axis=1))


def load_emissions(
    path: str | Path, tokens: TokenDictionary, strict: bool = True
) -> EmissionMatrix:
    """Load a binary (``CTCE``) or TSV emission file.

    The format is sniffed from the first four bytes. Column count must
    equal the token dictionary size.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == BINARY_MAGIC:
        lp = _parse_binary(path, raw)
    else:
        lp = _parse_tsv(path, raw)
    if lp.shape[1] != len(tokens):
        raise EmissionFormatError(
            f"{path}: {lp.shape[1]} columns but the token dictionary has "
            f"{len(tokens)} tokens"
        )
    bad = ~np.isfinite(lp)
    if bad.any():
        t, v = np.argwhere(bad)[0]
        raise EmissionFormatError(
            f"{path}: non-finite value at frame {t}, column {v}"
        )
    return EmissionMatrix(lp, strict=strict)


def _parse_binary(path: Path, raw: bytes) -> np.ndarray:
    header = struct.calcsize("<4sIII")
    if len(raw) < header:
        raise EmissionFormatError(f"{path}: truncated header")
    magic, version, t, v = struct.unpack_from("<4sIII", raw)
    if magic != BINARY_MAGIC:
        raise EmissionFormatError(f"{path}: bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise EmissionFormatError(f"{path}: unsupported version {version}")
    if v == 0:
        raise EmissionFormatError(f"{path}: zero-width matrix")
    expected = header + 4 * t * v
    if len(raw) != expected:
        raise EmissionFormatError(
            f"{path}: expected {expected} bytes for a {t}x{v} matrix, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=t * v, offset=header)
    return data.reshape(t, v).astype(np.float64)


def _parse_tsv(path: Path, raw: bytes) -> np.ndarray:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EmissionFormatError(f"{path}: neither CTCE binary nor UTF-8 TSV") from exc
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise EmissionFormatError(
                f"{path}: line {lineno}: expected {width} columns, got {len(fields)}"
            )
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise EmissionFormatError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        return np.zeros((0, 0), dtype=np.float64)
    return np.asarray(rows, dtype=np.float64)


def write_emissions(emissions: EmissionMatrix, path: str | Path) -> None:
    """Write the binary format: CTCE magic, version, T, V, f32 rows."""
    t, v = emissions.log_probs.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", BINARY_MAGIC, BINARY_VERSION, t, v))
        fh.write(emissions.log_probs.astype("<f4").tobytes())


def ctc_collapse(path: list[int] | np.ndarray, blank_index: int) -> list[int]:
    """Collapse a framewise path: merge consecutive repeats, drop blanks."""
    out: list[int] = []
    prev = -1
    for idx in path:
        idx = int(idx)
        if idx != prev:
            if idx != blank_index:
                out.append(idx)
            prev = idx
    return out


def greedy_decode(emissions: EmissionMatrix, tokens: TokenDictionary) -> list[int]:
    """Per-frame argmax path, CTC-collapsed. Argmax ties go to the lowest index."""
    if emissions.num_frames == 0:
        return []
    path = np.argmax(emissions.log_probs, axis=1)
    return ctc_collapse(path, tokens.blank_index)


def blank_collapse(
    emissions: EmissionMatrix, threshold: float, blank_index: int
) -> EmissionMatrix:
    """Drop frames whose blank probability reaches ``threshold``.

    A frame is removed iff ``exp(log_probs[t][blank]) >= threshold - 1e-12``.
    ``threshold`` must lie in (0, 1]; at exactly 1.0 skipping is disabled
    and the input is returned unchanged. Surviving rows keep their
    original frame indices in ``frame_map``.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if not emissions.has_identity_frame_map():
        raise ValueError("emissions were already collapsed (non-identity frame_map)")
    if threshold == 1.0:
        return emissions
    p_blank = np.exp(emissions.log_probs[:, blank_index])
    keep = p_blank < threshold - BLANK_SKIP_EPS
    return EmissionMatrix(
        emissions.log_probs[keep],
        frame_map=np.flatnonzero(keep),
        strict=False,
    )
