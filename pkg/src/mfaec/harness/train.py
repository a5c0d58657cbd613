"""Training loop and evaluation."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..autodiff import AdamState, Tape, adam_step, backward, zero_grad
from ..kvconfig import from_kv, read_kv
from ..model import MODES, ModelConfig, check_mode, collate, compute_losses, forward, init_params, is_aux, param_shapes
from ..synthdata import read_corpus
from .checkpoint import Checkpoint
from .metrics import MetricsReport, argmax_lowest

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


class MissingParameterError(KeyError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    beta: float = 0.1
    gamma: float = 3.0
    seed: int = 7
    mode: str = "full"
    eval_interval: int = 1
    train_data: str | None = None
    eval_data: str | None = None
    run_id: str = "run"
    timing: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        check_mode(self.mode)
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.batch_size < 1 or self.epochs < 0 or self.eval_interval < 1:
            raise ValueError("batch_size and eval_interval must be positive, epochs >= 0")


def load_train_config(path) -> TrainConfig:
    """Flat key-value file; model fields use a ``model.`` prefix."""
    kv = read_kv(path)
    model = from_kv(ModelConfig, {k: v for k, v in kv.items() if k.startswith("model.")}, "model.")
    top = {k: v for k, v in kv.items() if not k.startswith("model.")}
    cfg = from_kv(TrainConfig, top)
    cfg.model = model
    return cfg


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[MetricsReport]


def _examples(data):
    if data is None:
        return None
    if isinstance(data, (str, Path)):
        return read_corpus(data)
    return list(data)


def _batches(examples, size):
    return [examples[i:i + size] for i in range(0, len(examples), size)]


def train(config: TrainConfig, data=None, eval_data=None) -> TrainResult:
    """Optimise the joint objective with Adam for a fixed number of epochs.

    ``data``/``eval_data`` may be corpus paths or example lists; they default
    to the paths in ``config``. Without evaluation data, metrics are computed
    on the training set.
    """
    train_set = _examples(data if data is not None else config.train_data)
    if not train_set:
        raise ValueError("train: no training data")
    eval_set = _examples(eval_data if eval_data is not None else config.eval_data) or train_set
    cfg, mode = config.model, config.mode

    rng = np.random.default_rng(config.seed)
    params = init_params(cfg, mode, rng)
    drop_rng = np.random.default_rng([config.seed, 1]) if cfg.dropout > 0 else None
    state = AdamState(lr=config.lr)
    start = time.perf_counter()
    metrics: list[MetricsReport] = []
    step = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        sums = np.zeros(4)
        batches = _batches([train_set[i] for i in order], config.batch_size)
        for bi, chunk in enumerate(batches):
            batch = collate(chunk, cfg, mode)
            zero_grad(params)
            with Tape():
                bundle = forward(params, cfg, batch, mode, rng=drop_rng)
                losses = compute_losses(bundle, batch, config.beta, config.gamma, mode)
            vals = losses.values()
            if not math.isfinite(vals["loss_total"]):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}, batch {bi}")
            backward(losses.total)
            for p in params.values():
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            adam_step(params, state)
            step += 1
            sums += [vals["loss_emo"], vals["loss_d"], vals["loss_e"], vals["loss_total"]]

        if epoch % config.eval_interval == 0 or epoch == config.epochs:
            means = sums / len(batches)
            ckpt = Checkpoint.from_params(params, cfg, mode)
            report = evaluate(ckpt, eval_set, batch_size=config.batch_size)
            report.loss_emo, report.loss_d, report.loss_e, report.loss_total = map(float, means)
            report.epoch = epoch
            report.wall_s = time.perf_counter() - start if config.timing else 0.0
            metrics.append(report)
            log.info("epoch %d loss %.4f uar %.4f", epoch, means[3], report.uar)

    ckpt = Checkpoint.from_params(params, cfg, mode, step=step,
                                  rng_state=rng.bit_generator.state,
                                  meta={"run_id": config.run_id, "seed": config.seed})
    return TrainResult(ckpt, metrics)


def _check_params(ckpt: Checkpoint, mode: str):
    shapes = param_shapes(ckpt.config, mode)
    for name, shape in shapes.items():
        if is_aux(name):
            continue
        if name not in ckpt.params:
            raise MissingParameterError(f"checkpoint lacks {name!r} needed for mode {mode!r}")
        if ckpt.params[name].shape != shape:
            raise MissingParameterError(
                f"{name!r} has shape {ckpt.params[name].shape}; mode {mode!r} needs {shape}"
            )


def evaluate(ckpt: Checkpoint, data, mode: str | None = None, batch_size: int = 16,
             workers: int = 1) -> MetricsReport:
    """Inference-only evaluation: UAR, per-class recall, confusion, emotion NLL.

    Batches are fixed by corpus order, so sharding them over ``workers``
    threads gives identical results to a sequential run.
    """
    mode = mode or ckpt.mode
    check_mode(mode)
    _check_params(ckpt, mode)
    examples = _examples(data)
    if not examples:
        raise ValueError("evaluate: no examples")
    cfg = ckpt.config
    params = ckpt.to_params()
    batches = _batches(examples, batch_size)

    def run(chunk):
        batch = collate(chunk, cfg, mode, aux=False)
        return forward(params, cfg, batch, mode, aux=False).emotion_probs.data

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            probs = list(pool.map(run, batches))
    else:
        probs = [run(c) for c in batches]
    probs = np.concatenate(probs, axis=0)
    gold = np.array([ex.emotion for ex in examples], dtype=np.int64)
    pred = argmax_lowest(probs)
    nll = float(-np.mean(np.log(np.maximum(probs[np.arange(len(gold)), gold], 1e-12))))
    return MetricsReport.from_predictions(gold, pred, cfg.n_emotions, loss_emo=nll)
