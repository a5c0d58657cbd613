import itertools
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfaec import align as al
from mfaec.align import CHANGE, DELETE, KEEP

K, D, C = KEEP, DELETE, CHANGE


def lcs_len_oracle(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


def edit_oracle(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(go(i + 1, j) + 1, go(i, j + 1) + 1, go(i + 1, j + 1) + (a[i] != b[j]))
    return go(0, 0)


seqs = st.lists(st.sampled_from("abcde"), max_size=8)


class TestLCS:
    @pytest.mark.parametrize("hyp,ref,pairs", [
        ("abc", "abc", [(0, 0), (1, 1), (2, 2)]),
        ("axc", "abc", [(0, 0), (2, 2)]),
        ("xyz", "abc", []),
        ("", "abc", []),
    ])
    def test_examples(self, hyp, ref, pairs):
        assert al.lcs_align(hyp, ref) == pairs

    def test_ties_prefer_leftmost(self):
        # "a" could match either hypothesis "a"; the smaller index wins
        assert al.lcs_align("aa", "a") == [(0, 0)]
        assert al.lcs_align("a", "aa") == [(0, 0)]
        assert al.lcs_align("ab", "ba") == [(0, 1)]

    @settings(max_examples=200, deadline=None)
    @given(seqs, seqs)
    def test_is_longest_common_subsequence(self, a, b):
        pairs = al.lcs_align(a, b)
        assert len(pairs) == lcs_len_oracle(tuple(a), tuple(b))
        assert all(a[i] == b[j] for i, j in pairs)
        assert all(i1 < i2 and j1 < j2 for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]))


class TestLabelEdits:
    def test_identity_all_keep(self):
        lab = al.label_edits("abc", "abc")
        assert lab.labels == (K, K, K) and lab.targets == {}

    def test_deletion(self):
        lab = al.label_edits("abc", "ac")
        assert lab.labels == (K, D, K)
        assert al.apply_labeling("abc", lab) == list("ac")

    def test_substitution_gap(self):
        lab = al.label_edits("axyc", "abc")
        assert lab.labels == (K, C, D, K)
        assert lab.targets == {1: ("b",)}

    def test_gap_absorbs_longer_reference(self):
        lab = al.label_edits("axc", "abbbc")
        assert lab.labels == (K, C, K) and lab.targets == {1: ("b", "b", "b")}

    def test_pure_insertion_promotes_following_token(self):
        # the following anchor carries the inserted token in front of itself
        lab = al.label_edits("ac", "abc")
        assert lab.labels == (K, C)
        assert lab.targets == {1: ("b", "c")}
        assert al.apply_labeling("ac", lab) == list("abc")

    def test_trailing_insertion_promotes_preceding_token(self):
        lab = al.label_edits("ab", "abxy")
        assert lab.labels == (K, C) and lab.targets == {1: ("b", "x", "y")}

    def test_insertions_on_both_sides_of_one_anchor(self):
        lab = al.label_edits("a", "xay")
        assert lab.labels == (C,) and lab.targets == {0: ("x", "a", "y")}

    def test_unalignable(self):
        with pytest.raises(al.UnalignableError):
            al.label_edits([], ["a"])
        assert al.label_edits([], []).labels == ()

    def test_empty_reference_deletes_everything(self):
        assert al.label_edits("ab", "").labels == (D, D)

    def test_cached_matches_uncached(self):
        assert al.cached_label_edits(tuple("axc"), tuple("abc")) == al.label_edits("axc", "abc")

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=8), seqs)
    def test_round_trip_and_targets(self, hyp, ref):
        lab = al.label_edits(hyp, ref)
        assert al.apply_labeling(hyp, lab) == ref
        assert len(lab) == len(hyp)
        for i, label in enumerate(lab.labels):
            if label == CHANGE:
                assert len(lab.targets[i]) > 0
            else:
                assert i not in lab.targets
        assert len(lab.anchors) == lcs_len_oracle(tuple(hyp), tuple(ref))
        assert lab.keep_count() <= len(lab.anchors)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=8), seqs)
    def test_keep_count_plus_promoted_anchors_is_lcs(self, hyp, ref):
        lab = al.label_edits(hyp, ref)
        promoted = sum(1 for i in lab.anchors if lab.labels[i] == CHANGE)
        assert lab.keep_count() + promoted == lcs_len_oracle(tuple(hyp), tuple(ref))


class TestApplyLabeling:
    def test_all_keep(self):
        assert al.apply_labeling("abc", al.AlignmentLabeling((K, K, K))) == list("abc")

    def test_kdk(self):
        assert al.apply_labeling("abc", al.AlignmentLabeling((K, D, K))) == list("ac")

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            al.apply_labeling("ab", al.AlignmentLabeling((K,)))


class TestWER:
    @pytest.mark.parametrize("hyp,ref,expected", [
        ("abc", "abc", Fraction(0)),
        ("abc", "axc", Fraction(1, 3)),
        ("", "abc", Fraction(1)),
        ("abcd", "a", Fraction(3)),
    ])
    def test_examples(self, hyp, ref, expected):
        assert al.wer(hyp, ref) == expected

    def test_empty_reference(self):
        with pytest.raises(ValueError):
            al.wer("a", "")

    @settings(max_examples=200, deadline=None)
    @given(seqs, st.lists(st.sampled_from("abcde"), min_size=1, max_size=8))
    def test_matches_recursive_oracle(self, hyp, ref):
        assert al.wer(hyp, ref) == Fraction(edit_oracle(tuple(hyp), tuple(ref)), len(ref))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=8), seqs,
           st.permutations("abcde"))
    def test_invariant_under_vocab_bijection(self, ref, hyp, perm):
        m = dict(zip("abcde", perm))
        assert al.wer(hyp, ref) == al.wer([m[t] for t in hyp], [m[t] for t in ref])
        assert al.wer(ref, ref) == 0


class TestVocab:
    def test_reserved_first(self):
        v = al.Vocab.synthetic(8)
        assert v.itos[:4] == list(al.RESERVED)
        assert (al.PAD_ID, al.BOS_ID, al.EOS_ID, al.UNK_ID) == (0, 1, 2, 3)
        assert list(v.content_ids) == [4, 5, 6, 7]

    def test_round_trip_and_unknown(self):
        v = al.Vocab.synthetic(8)
        assert v.decode(v.encode(["w4", "w7"])) == ["w4", "w7"]
        assert v.encode(["nope"]) == (al.UNK_ID,)

    def test_too_small(self):
        with pytest.raises(ValueError):
            al.Vocab.synthetic(4)


def test_format_alignment():
    lab = al.label_edits(["a", "x", "c"], ["a", "b", "b", "c"])
    assert al.format_alignment("u1", lab) == "u1\tK C K\t1:b b"
    lab = al.label_edits(["a", "x", "c", "y"], ["q", "a", "c", "z"])
    assert al.format_alignment(7, lab) == "7\tC D K C\t0:q a;3:z"


def test_exhaustive_small_alphabet():
    # every pair of length <= 3 over {a, b}
    words = [w for n in range(4) for w in itertools.product("ab", repeat=n)]
    for hyp in words:
        for ref in words:
            if not hyp:
                continue
            lab = al.label_edits(hyp, ref)
            assert al.apply_labeling(hyp, lab) == list(ref), (hyp, ref)
