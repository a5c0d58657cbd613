from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tensor

MODES = ("full", "no-aed", "no-aec", "no-mf")
AUX_PREFIXES = ("aed.", "aec.")


@dataclass
class ModelConfig:
    d: int = 64
    h: int = 4
    enc_layers_speech: int = 2
    enc_layers_text: int = 2
    frame_dim: int = 8
    downsample: int = 2
    vocab_size: int = 64
    n_emotions: int = 4
    d_max: int = 8
    dropout: float = 0.0
    d_ff: int = 128
    max_text_len: int = 32
    max_speech_len: int = 64

    def __post_init__(self):
        for name in ("d", "h", "frame_dim", "downsample", "vocab_size", "n_emotions",
                     "d_ff", "max_text_len", "max_speech_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.enc_layers_speech < 0 or self.enc_layers_text < 0:
            raise ValueError("layer counts must be non-negative")
        if self.d % self.h:
            raise ValueError(f"d={self.d} is not divisible by h={self.h}")
        if self.d_max < 2:
            raise ValueError("d_max must leave room for <BOS>/<EOS> (>= 2)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {MODES}")
    return mode


def is_aux(name: str) -> bool:
    return name.startswith(AUX_PREFIXES)


def _attention(prefix, d):
    shapes = {}
    for k in "qkvo":
        shapes[f"{prefix}.w{k}"] = (d, d)
        shapes[f"{prefix}.b{k}"] = (d,)
    return shapes


def _norm(prefix, d):
    return {f"{prefix}.g": (d,), f"{prefix}.b": (d,)}


def _ffn(prefix, d, d_ff):
    return {f"{prefix}.w1": (d, d_ff), f"{prefix}.b1": (d_ff,),
            f"{prefix}.w2": (d_ff, d), f"{prefix}.b2": (d,)}


def _encoder_layer(prefix, cfg):
    return {**_attention(f"{prefix}.attn", cfg.d), **_norm(f"{prefix}.ln1", cfg.d),
            **_ffn(f"{prefix}.ffn", cfg.d, cfg.d_ff), **_norm(f"{prefix}.ln2", cfg.d)}


def param_shapes(cfg: ModelConfig, mode: str = "full") -> dict[str, tuple[int, ...]]:
    """Name -> shape for every learned tensor of ``mode``; order is canonical."""
    check_mode(mode)
    d, V = cfg.d, cfg.vocab_size
    shapes = {
        "text.tok_emb": (V, d),
        "text.pos_emb": (max(cfg.max_text_len, cfg.d_max), d),
        "speech.conv.w": (cfg.downsample * cfg.frame_dim, d),
        "speech.conv.b": (d,),
        "speech.pos_emb": (cfg.max_speech_len, d),
    }
    for i in range(cfg.enc_layers_speech):
        shapes.update(_encoder_layer(f"speech.layers.{i}", cfg))
    for i in range(cfg.enc_layers_text):
        shapes.update(_encoder_layer(f"text.layers.{i}", cfg))

    if mode != "no-aed":
        shapes.update({"aed.w": (d, 3), "aed.b": (3,)})
    if mode != "no-aec":
        shapes.update({"aec.in.w": (2 * d, d), "aec.in.b": (d,)})
        shapes.update(_attention("aec.dec.self_attn", d))
        shapes.update(_norm("aec.dec.ln1", d))
        shapes.update(_attention("aec.dec.cross_attn", d))
        shapes.update(_norm("aec.dec.ln2", d))
        shapes.update(_ffn("aec.dec.ffn", d, cfg.d_ff))
        shapes.update(_norm("aec.dec.ln3", d))
        shapes.update({"aec.out.w": (d, V), "aec.out.b": (V,)})

    if mode != "no-mf":
        for side in ("s", "t"):
            shapes.update(_attention(f"cme_{side}.attn", d))
            shapes.update(_norm(f"cme_{side}.ln1", d))
            shapes.update(_ffn(f"cme_{side}.ffn", d, cfg.d_ff))
            shapes.update(_norm(f"cme_{side}.ln2", d))
        for side in ("s", "t"):
            shapes.update(_attention(f"hma_{side}.attn", d))
            shapes.update({f"hma_{side}.mask.w": (d, 2 * d), f"hma_{side}.mask.b": (d,)})
        for side in ("s", "t"):
            shapes.update({f"mir_{side}.conv.w": (d, d), f"mir_{side}.conv.b": (d,),
                           f"mir_{side}.prelu": (d,)})
        shapes.update(_norm("mir.ln", d))
        shapes["cls.w"] = (d, cfg.n_emotions)
    else:
        shapes["cls.w"] = (2 * d, cfg.n_emotions)
    shapes["cls.b"] = (cfg.n_emotions,)
    return shapes


def init_params(cfg: ModelConfig, mode: str = "full", seed=0) -> dict[str, Tensor]:
    """Random initialisation; ``seed`` may be an int or a numpy Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg, mode).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.endswith("_emb"):
            value = rng.normal(0.0, cfg.d ** -0.5, shape)
        elif leaf == "prelu":
            value = np.full(shape, 0.25)
        elif leaf == "g":
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            value = rng.normal(0.0, np.sqrt(2.0 / (shape[0] + shape[1])), shape)
        params[name] = Tensor(value, requires_grad=True)
    return params
