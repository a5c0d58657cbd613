"""LCS alignment of ASR hypotheses against reference transcripts.

Hypothesis tokens are labelled KEEP / DELETE / CHANGE. Each CHANGE position
carries the reference tokens it has to produce, so that applying the
labelling to the hypothesis reconstructs the reference exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Hashable, Sequence

KEEP, DELETE, CHANGE = 0, 1, 2
LABEL_NAMES = ("K", "D", "C")

PAD, BOS, EOS, UNK = "<PAD>", "<BOS>", "<EOS>", "<UNK>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)


class Vocab:
    """Bidirectional token <-> id map with the four reserved ids first."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            self.add(tok)

    @classmethod
    def synthetic(cls, size: int) -> "Vocab":
        """Reserved tokens plus content tokens ``w4 .. w{size-1}``."""
        if size <= len(RESERVED):
            raise ValueError(f"vocab size must exceed {len(RESERVED)}")
        return cls(f"w{i}" for i in range(len(RESERVED), size))

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    def __len__(self):
        return len(self.itos)

    @property
    def content_ids(self) -> range:
        return range(len(RESERVED), len(self.itos))

    def encode(self, tokens: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.stoi.get(t, UNK_ID) for t in tokens)

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]


class UnalignableError(ValueError):
    """Empty hypothesis against a nonempty reference."""


@dataclass(frozen=True)
class AlignmentLabeling:
    labels: tuple[int, ...]
    targets: dict[int, tuple] = field(default_factory=dict)
    # hypothesis positions matched by the LCS (KEEP, or promoted to CHANGE)
    anchors: tuple[int, ...] = ()

    def __len__(self):
        return len(self.labels)

    @property
    def change_positions(self) -> list[int]:
        return sorted(self.targets)

    def keep_count(self) -> int:
        return sum(1 for lab in self.labels if lab == KEEP)

    def label_string(self) -> str:
        return " ".join(LABEL_NAMES[lab] for lab in self.labels)


def lcs_table(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> list[list[int]]:
    """Suffix table: ``L[i][j]`` is the LCS length of ``hyp[i:]`` and ``ref[j:]``."""
    n, p = len(hyp), len(ref)
    L = [[0] * (p + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = L[i], L[i + 1]
        hi = hyp[i]
        for j in range(p - 1, -1, -1):
            if hi == ref[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    return L


def lcs_align(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> list[tuple[int, int]]:
    """Matched ``(hyp_index, ref_index)`` pairs of a longest common subsequence.

    Ties resolve leftmost: equal heads are matched immediately, otherwise the
    reference token is skipped first so hypothesis indices stay small.
    """
    L = lcs_table(hyp, ref)
    pairs = []
    i = j = 0
    n, p = len(hyp), len(ref)
    while i < n and j < p:
        if hyp[i] == ref[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif L[i][j + 1] == L[i][j]:
            j += 1
        else:
            i += 1
    return pairs


def label_edits(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> AlignmentLabeling:
    """KEEP/DELETE/CHANGE labels for ``hyp`` with CHANGE targets drawn from ``ref``.

    Between consecutive LCS anchors, the first hypothesis gap token becomes
    CHANGE and absorbs the whole reference gap; remaining gap tokens are
    DELETE. A reference gap with no hypothesis tokens (pure insertion) is
    prepended to the following anchor, or appended to the preceding one at
    the end of the sequence, turning that anchor into a CHANGE.
    """
    hyp, ref = list(hyp), list(ref)
    if not hyp:
        if ref:
            raise UnalignableError("empty hypothesis with nonempty reference")
        return AlignmentLabeling((), {}, ())
    pairs = lcs_align(hyp, ref)
    n = len(hyp)
    labels = [DELETE] * n
    targets: dict[int, list] = {}
    prefix: dict[int, list] = {}
    suffix: dict[int, list] = {}
    for i, _ in pairs:
        labels[i] = KEEP

    bounds = [(-1, -1)] + pairs + [(n, len(ref))]
    for (pi, pj), (ni, nj) in zip(bounds, bounds[1:]):
        hyp_gap = range(pi + 1, ni)
        ref_gap = ref[pj + 1:nj]
        if not ref_gap:
            continue
        if hyp_gap:
            first = hyp_gap[0]
            labels[first] = CHANGE
            targets[first] = list(ref_gap)
        elif ni < n:
            prefix.setdefault(ni, []).extend(ref_gap)
        else:
            suffix.setdefault(pi, []).extend(ref_gap)

    for i in set(prefix) | set(suffix):
        labels[i] = CHANGE
        targets[i] = prefix.get(i, []) + [hyp[i]] + suffix.get(i, [])

    return AlignmentLabeling(
        tuple(labels),
        {k: tuple(v) for k, v in sorted(targets.items())},
        tuple(i for i, _ in pairs),
    )


@lru_cache(maxsize=65536)
def cached_label_edits(hyp: tuple, ref: tuple) -> AlignmentLabeling:
    return label_edits(hyp, ref)


def apply_labeling(hyp: Sequence[Hashable], labeling: AlignmentLabeling) -> list:
    if len(hyp) != len(labeling.labels):
        raise ValueError(
            f"labeling length {len(labeling.labels)} != hypothesis length {len(hyp)}"
        )
    out = []
    for i, (tok, lab) in enumerate(zip(hyp, labeling.labels)):
        if lab == KEEP:
            out.append(tok)
        elif lab == CHANGE:
            out.extend(labeling.targets[i])
    return out


def edit_distance(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> int:
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, 1):
        cur = [i] + [0] * len(ref)
        for j, r in enumerate(ref, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (h != r))
        prev = cur
    return prev[-1]


def wer(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> Fraction:
    """Word error rate as an exact fraction: edit distance / len(ref)."""
    if not ref:
        raise ValueError("wer: empty reference")
    return Fraction(edit_distance(hyp, ref), len(ref))


def format_alignment(uid, labeling: AlignmentLabeling) -> str:
    """``id<TAB>labels<TAB>pos:tokens;pos:tokens`` line used by the CLI."""
    entries = ";".join(
        f"{k}:{' '.join(str(t) for t in v)}" for k, v in labeling.targets.items()
    )
    return f"{uid}\t{labeling.label_string()}\t{entries}"
