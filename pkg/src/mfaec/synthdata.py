"""Synthetic emotion-labelled utterances and a token-level ASR corruption channel.

Speech frames are token-locked: each transcript token contributes
``frames_per_token`` copies of its prototype vector, shifted by a
per-emotion offset and perturbed with Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .align import RESERVED

FORMAT_VERSION = "v1"
HEADER_FIELDS = ("id", "emotion", "transcript", "asr", "m", "frame_dim", "frames")
HEADER = "#mfaec-corpus\t" + FORMAT_VERSION + "\t" + "\t".join(HEADER_FIELDS)
N_RESERVED = len(RESERVED)


class CorpusFormatError(ValueError):
    pass


@dataclass
class CorpusSpec:
    vocab_size: int = 64
    n_emotions: int = 4
    keywords_per_emotion: int = 8
    alpha: float = 0.9
    min_len: int = 4
    max_len: int = 10
    frame_dim: int = 8
    frames_per_token: int = 4
    sigma: float = 0.1
    emotion_offset: float = 0.5
    seed: int = 7

    def __post_init__(self):
        n_content = self.vocab_size - N_RESERVED
        n_keywords = self.n_emotions * self.keywords_per_emotion
        if self.n_emotions < 1 or self.keywords_per_emotion < 1:
            raise ValueError("n_emotions and keywords_per_emotion must be positive")
        if n_keywords > n_content:
            raise ValueError(f"{n_keywords} keywords do not fit in {n_content} content tokens")
        if self.alpha < 1.0 and n_keywords == n_content:
            raise ValueError("alpha < 1 needs background tokens outside the keyword sets")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(f"empty length range [{self.min_len}, {self.max_len}]")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.frame_dim < 1 or self.frames_per_token < 1:
            raise ValueError("frame_dim and frames_per_token must be positive")

    def keyword_ids(self, emotion: int) -> np.ndarray:
        start = N_RESERVED + emotion * self.keywords_per_emotion
        return np.arange(start, start + self.keywords_per_emotion)

    def background_ids(self) -> np.ndarray:
        return np.arange(N_RESERVED + self.n_emotions * self.keywords_per_emotion, self.vocab_size)

    def token_distribution(self, emotion: int) -> np.ndarray:
        """Categorical over the full vocabulary for one emotion."""
        probs = np.zeros(self.vocab_size)
        probs[self.keyword_ids(emotion)] = self.alpha / self.keywords_per_emotion
        bg = self.background_ids()
        if bg.size:
            probs[bg] += (1.0 - self.alpha) / bg.size
        return probs / probs.sum()


@dataclass
class CorruptionSpec:
    p_sub: float = 0.1
    p_del: float = 0.05
    p_ins: float = 0.05
    vocab_size: int = 64
    confusion: str = "uniform"
    seed: int = 7

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.p_sub + self.p_del > 1.0:
            raise ValueError("p_sub + p_del must not exceed 1")
        if self.confusion != "uniform":
            raise ValueError(f"unsupported confusion distribution {self.confusion!r}")
        if self.vocab_size - N_RESERVED < 2:
            raise ValueError("substitution needs at least two content tokens")

    @property
    def expected_error_rate(self) -> float:
        """Expected channel operations per reference token."""
        return self.p_sub + self.p_del + self.p_ins


@dataclass
class UtteranceExample:
    uid: int
    frames: np.ndarray
    asr: tuple[int, ...]
    transcript: tuple[int, ...]
    emotion: int

    def __eq__(self, other):
        if not isinstance(other, UtteranceExample):
            return NotImplemented
        return (
            self.uid == other.uid
            and self.asr == other.asr
            and self.transcript == other.transcript
            and self.emotion == other.emotion
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


@dataclass
class Prototypes:
    tokens: np.ndarray = field(repr=False)
    emotions: np.ndarray = field(repr=False)


def derived_rng(seed: int, uid: int, stream: int = 0) -> np.random.Generator:
    """Generator that depends only on ``(seed, uid, stream)``."""
    return np.random.default_rng([int(seed), int(uid), int(stream)])


def make_prototypes(spec: CorpusSpec) -> Prototypes:
    rng = np.random.default_rng([int(spec.seed), 0xFACE])
    tokens = rng.standard_normal((spec.vocab_size, spec.frame_dim))
    emotions = spec.emotion_offset * rng.standard_normal((spec.n_emotions, spec.frame_dim))
    return Prototypes(tokens, emotions)


def gen_utterance(spec: CorpusSpec, uid: int, protos: Prototypes | None = None):
    """Frames, transcript and emotion for utterance ``uid``."""
    protos = protos or make_prototypes(spec)
    rng = derived_rng(spec.seed, uid)
    emotion = int(rng.integers(spec.n_emotions))
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    probs = spec.token_distribution(emotion)
    transcript = tuple(int(t) for t in rng.choice(spec.vocab_size, size=length, p=probs))
    base = protos.tokens[list(transcript)] + protos.emotions[emotion]
    frames = np.repeat(base, spec.frames_per_token, axis=0)
    if spec.sigma > 0:
        frames = frames + spec.sigma * rng.standard_normal(frames.shape)
    return frames, transcript, emotion


def gen_corpus(spec: CorpusSpec, n_utterances: int):
    if n_utterances <= 0:
        raise ValueError("n_utterances must be positive")
    protos = make_prototypes(spec)
    return [gen_utterance(spec, uid, protos) for uid in range(n_utterances)]


def corrupt(transcript: Sequence[int], spec: CorruptionSpec, uid: int) -> tuple[int, ...]:
    """Pass a transcript through the substitution/deletion/insertion channel."""
    rng = derived_rng(spec.seed, uid, stream=1)
    lo, hi = N_RESERVED, spec.vocab_size
    out = []
    for tok in transcript:
        u = rng.random()
        if u < spec.p_sub:
            # uniform over content tokens other than the original
            new = int(rng.integers(lo, hi - 1))
            out.append(new + 1 if new >= tok else new)
        elif u >= spec.p_sub + spec.p_del:
            out.append(int(tok))
        if rng.random() < spec.p_ins:
            out.append(int(rng.integers(lo, hi)))
    return tuple(out)


def build_examples(
    spec: CorpusSpec, corruption: CorruptionSpec, n_utterances: int
) -> list[UtteranceExample]:
    examples = []
    for uid, (frames, transcript, emotion) in enumerate(gen_corpus(spec, n_utterances)):
        asr = corrupt(transcript, corruption, uid)
        examples.append(UtteranceExample(uid, frames, asr, transcript, emotion))
    return examples


# ---------------------------------------------------------------- file I/O

def _format_record(ex: UtteranceExample) -> str:
    m, fd = ex.frames.shape
    frames = " ".join(repr(float(v)) for v in ex.frames.reshape(-1))
    return "\t".join((
        str(ex.uid),
        str(ex.emotion),
        " ".join(map(str, ex.transcript)),
        " ".join(map(str, ex.asr)),
        str(m),
        str(fd),
        frames,
    ))


def write_corpus(examples: Iterable[UtteranceExample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HEADER + "\n")
        for ex in examples:
            fh.write(_format_record(ex) + "\n")


def _parse_ints(text: str, lineno: int, name: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split())
    except ValueError:
        raise CorpusFormatError(f"line {lineno}: field {name!r}: expected integers") from None


def read_corpus(path) -> list[UtteranceExample]:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if not lines or lines[0] != HEADER:
        raise CorpusFormatError(f"line 1: field 'header': expected {HEADER!r}")
    examples = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != len(HEADER_FIELDS):
            raise CorpusFormatError(
                f"line {lineno}: field 'record': expected {len(HEADER_FIELDS)} "
                f"tab-separated fields, got {len(cols)}"
            )
        uid = _parse_ints(cols[0], lineno, "id")
        emotion = _parse_ints(cols[1], lineno, "emotion")
        if len(uid) != 1 or len(emotion) != 1:
            raise CorpusFormatError(f"line {lineno}: field 'id'/'emotion': expected one integer")
        transcript = _parse_ints(cols[2], lineno, "transcript")
        asr = _parse_ints(cols[3], lineno, "asr")
        m = _parse_ints(cols[4], lineno, "m")
        fd = _parse_ints(cols[5], lineno, "frame_dim")
        try:
            values = np.array([float(v) for v in cols[6].split()], dtype=np.float64)
        except ValueError:
            raise CorpusFormatError(f"line {lineno}: field 'frames': expected decimals") from None
        if len(m) != 1 or len(fd) != 1 or values.size != m[0] * fd[0]:
            raise CorpusFormatError(
                f"line {lineno}: field 'frames': {values.size} values do not match "
                f"declared shape ({cols[4]}, {cols[5]})"
            )
        examples.append(UtteranceExample(
            uid[0], values.reshape(m[0], fd[0]), asr, transcript, emotion[0]
        ))
    return examples
