"""
Ablating the fusion module
==========================

Compare the full model with a variant that replaces the fusion module by
plain mean pooling, over a few seeds.
"""

from mfaec.harness import TrainConfig, ablate
from mfaec.model import ModelConfig
from mfaec.synthdata import CorpusSpec, CorruptionSpec, build_examples

examples = build_examples(CorpusSpec(seed=7, alpha=0.6, sigma=0.5), CorruptionSpec(seed=7), 400)
base = TrainConfig(epochs=2, model=ModelConfig(d=32, h=4, d_ff=64))

table = ablate(base, ["full", "no-mf"], [1, 2, 3], examples[:300], examples[300:],
               out_csv="/tmp/demo_ablation.csv")
print(table.format())
