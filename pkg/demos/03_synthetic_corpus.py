"""
A synthetic emotion corpus with a noisy recogniser
===================================================

Utterances draw words from emotion-specific keyword sets; speech frames are
token prototypes plus an emotion offset and noise. A corruption channel
plays the role of the speech recogniser.
"""

import numpy as np

from mfaec.align import wer
from mfaec.synthdata import CorpusSpec, CorruptionSpec, build_examples, read_corpus, write_corpus

spec = CorpusSpec(alpha=0.9, sigma=0.1, seed=7)
noise = CorruptionSpec(p_sub=0.1, p_del=0.05, p_ins=0.05, seed=7)
examples = build_examples(spec, noise, 200)

ex = examples[0]
print("emotion", ex.emotion)
print("transcript", ex.transcript)
print("asr       ", ex.asr)
print("frames", ex.frames.shape)  # frames_per_token rows per word

print("class counts", np.bincount([e.emotion for e in examples]))
print("mean WER %.3f (channel rate %.2f)" % (
    np.mean([float(wer(e.asr, e.transcript)) for e in examples]), noise.expected_error_rate))

# the text file round trip is exact
write_corpus(examples, "/tmp/demo_corpus.tsv")
print(read_corpus("/tmp/demo_corpus.tsv") == examples)
