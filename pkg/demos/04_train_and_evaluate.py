"""
Training the fusion model
=========================

Train on a small synthetic corpus, save a checkpoint, and evaluate it with
and without the auxiliary error-correction heads.
"""

from mfaec.harness import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train
from mfaec.model import ModelConfig, forward_infer
from mfaec.synthdata import CorpusSpec, CorruptionSpec, build_examples

examples = build_examples(CorpusSpec(seed=7), CorruptionSpec(seed=7), 500)
train_set, eval_set = examples[:400], examples[400:]

config = TrainConfig(epochs=3, model=ModelConfig(d=32, h=4, d_ff=64))
result = train(config, train_set, eval_set)
for m in result.metrics:
    print("epoch %d  loss %.3f  UAR %.3f" % (m.epoch, m.loss_total, m.uar))

save_checkpoint(result.checkpoint, "/tmp/demo.ckpt")

# at inference the AED and AEC heads are dropped; the emotion output is unchanged
full = evaluate(load_checkpoint("/tmp/demo.ckpt"), eval_set)
lean = evaluate(load_checkpoint("/tmp/demo.ckpt", strip_aux=True), eval_set)
print("UAR full %.3f, stripped %.3f" % (full.uar, lean.uar))
print(full.confusion)

ckpt = load_checkpoint("/tmp/demo.ckpt", strip_aux=True)
ex = eval_set[0]
print("probabilities", forward_infer(ex.frames, ex.asr, ckpt.to_params(), ckpt.config).round(3),
      "gold", ex.emotion)
