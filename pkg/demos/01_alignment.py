"""
Labelling ASR errors against a reference
=========================================

Align a hypothesis with its reference transcript, label every hypothesis
token KEEP / DELETE / CHANGE, and rebuild the reference from the labels.
"""

from mfaec import align as al

ref = "the cat sat on the mat".split()
hyp = "the bat sat sat on mat".split()

# matched (hypothesis, reference) index pairs of the longest common subsequence
print(al.lcs_align(hyp, ref))

labeling = al.label_edits(hyp, ref)
print(labeling.label_string())
print(labeling.targets)  # CHANGE positions and the reference tokens they produce

# applying the labels gives back the reference exactly
print(" ".join(al.apply_labeling(hyp, labeling)))

# a dropped word has no hypothesis token of its own, so it rides on a neighbour
labeling = al.label_edits(["a", "c"], ["a", "b", "c"])
print(labeling.label_string(), labeling.targets)

print("WER:", al.wer(hyp, ref), "=", float(al.wer(hyp, ref)))
