"""MF-AED-AEC forward pass and joint objective.

All blocks work on padded batches: activations are (B, T, d) tensors with
boolean masks marking real positions. Attention never reads padded keys and
pooling ignores padded rows, so every example's result matches what it
would produce alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..align import BOS_ID, DELETE, EOS_ID, KEEP, PAD_ID, UNK_ID, cached_label_edits
from ..autodiff import Tensor
from ..autodiff import ops
from .config import ModelConfig, check_mode
from .layers import attention, causal_bias, decoder_layer, key_bias, norm, transformer_layer


class InputError(ValueError):
    """Example violates an encoder precondition."""


@dataclass
class Batch:
    windows: np.ndarray        # (B, M', downsample * frame_dim)
    speech_mask: np.ndarray    # (B, M')
    tokens: np.ndarray         # (B, N)
    text_mask: np.ndarray      # (B, N)
    emotions: np.ndarray | None = None
    alignable: np.ndarray | None = None
    aed_labels: np.ndarray | None = None
    aed_mask: np.ndarray | None = None
    pair_batch: np.ndarray | None = None
    pair_pos: np.ndarray | None = None
    dec_in: np.ndarray | None = None
    dec_out: np.ndarray | None = None
    dec_mask: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_pairs(self) -> int:
        return 0 if self.pair_batch is None else len(self.pair_batch)


def _pad(rows: Sequence[np.ndarray], fill=0, dtype=None):
    width = max(len(r) for r in rows)
    tail = rows[0].shape[1:]
    out = np.full((len(rows), width) + tail, fill, dtype=dtype or rows[0].dtype)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
        mask[i, :len(r)] = True
    return out, mask


def speech_windows(frames: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Group raw frames into non-overlapping stride windows; drops the remainder."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != cfg.frame_dim:
        raise InputError(f"speech frames must be (m, {cfg.frame_dim}), got {frames.shape}")
    m_out = frames.shape[0] // cfg.downsample
    if m_out == 0:
        raise InputError(f"speech too short: m={frames.shape[0]} < downsample={cfg.downsample}")
    if m_out > cfg.max_speech_len:
        raise InputError(f"speech too long: {m_out} positions > {cfg.max_speech_len}")
    return frames[:m_out * cfg.downsample].reshape(m_out, cfg.downsample * cfg.frame_dim)


def text_ids(tokens: Sequence[int], cfg: ModelConfig) -> np.ndarray:
    ids = np.asarray(tuple(tokens) or (UNK_ID,), dtype=np.int64)
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise InputError(f"token id out of vocabulary range [0, {cfg.vocab_size})")
    if len(ids) > cfg.max_text_len:
        raise InputError(f"hypothesis too long: {len(ids)} > {cfg.max_text_len}")
    return ids


def aec_targets(asr, labeling, mode: str) -> list[tuple[int, tuple]]:
    """(position, target) pairs the correction decoder is trained on."""
    if mode == "no-aed":
        out = []
        for i, (tok, lab) in enumerate(zip(asr, labeling.labels)):
            if lab == KEEP:
                out.append((i, (tok,)))
            elif lab == DELETE:
                out.append((i, ()))
            else:
                out.append((i, labeling.targets[i]))
        return out
    return list(labeling.targets.items())


def collate(examples, cfg: ModelConfig, mode: str = "full", aux: bool = True) -> Batch:
    """Pad a list of examples into a :class:`Batch`.

    Examples need ``frames`` and ``asr``; ``emotion`` and ``transcript`` are
    used when present. An empty hypothesis is encoded as a single ``<UNK>``
    and marked unalignable.
    """
    check_mode(mode)
    windows, wmask = _pad([speech_windows(ex.frames, cfg) for ex in examples], 0.0, np.float64)
    tokens, tmask = _pad([text_ids(ex.asr, cfg) for ex in examples], PAD_ID, np.int64)
    batch = Batch(windows, wmask, tokens, tmask)
    if all(getattr(ex, "emotion", None) is not None for ex in examples):
        batch.emotions = np.array([ex.emotion for ex in examples], dtype=np.int64)
    if not aux or any(getattr(ex, "transcript", None) is None for ex in examples):
        return batch

    B, N = tokens.shape
    batch.alignable = np.array([len(ex.asr) > 0 for ex in examples])
    batch.aed_labels = np.zeros((B, N), dtype=np.int64)
    batch.aed_mask = np.zeros((B, N), dtype=bool)
    pairs = []
    for b, ex in enumerate(examples):
        if not batch.alignable[b]:
            continue
        labeling = cached_label_edits(tuple(ex.asr), tuple(ex.transcript))
        n = len(ex.asr)
        batch.aed_labels[b, :n] = labeling.labels
        batch.aed_mask[b, :n] = True
        for pos, target in aec_targets(ex.asr, labeling, mode):
            pairs.append((b, pos, tuple(target)[:cfg.d_max - 1]))

    R = len(pairs)
    T = max((len(t) + 1 for _, _, t in pairs), default=1)
    batch.pair_batch = np.array([b for b, _, _ in pairs], dtype=np.int64)
    batch.pair_pos = np.array([k for _, k, _ in pairs], dtype=np.int64)
    batch.dec_in = np.full((R, T), PAD_ID, dtype=np.int64)
    batch.dec_out = np.full((R, T), PAD_ID, dtype=np.int64)
    batch.dec_mask = np.zeros((R, T), dtype=bool)
    for r, (_, _, target) in enumerate(pairs):
        L = len(target)
        batch.dec_in[r, 0] = BOS_ID
        batch.dec_in[r, 1:L + 1] = target
        batch.dec_out[r, :L] = target
        batch.dec_out[r, L] = EOS_ID
        batch.dec_mask[r, :L + 1] = True
    return batch


# ---------------------------------------------------------------- blocks

def encode_speech(windows, speech_mask, p, cfg: ModelConfig, rng=None, trace=None) -> Tensor:
    """Strided convolution (kernel = stride = downsample), positions, encoder stack."""
    rate = cfg.dropout if rng is not None else 0.0
    x = ops.linear(windows, p["speech.conv.w"], p["speech.conv.b"])
    x = ops.add(x, ops.index(p["speech.pos_emb"], slice(0, x.shape[1])))
    bias = key_bias(speech_mask)
    for i in range(cfg.enc_layers_speech):
        x = transformer_layer(p, f"speech.layers.{i}", x, x, bias, cfg.h, rate, rng, trace)
    return x


def encode_text(tokens, text_mask, p, cfg: ModelConfig, rng=None, trace=None) -> Tensor:
    """H_T = Encoder(TE(T) + PE(T)) with bidirectional self-attention."""
    tokens = np.asarray(tokens)
    if tokens.shape[1] > cfg.max_text_len:
        raise InputError(f"hypothesis too long: {tokens.shape[1]} > {cfg.max_text_len}")
    rate = cfg.dropout if rng is not None else 0.0
    x = ops.embedding(p["text.tok_emb"], tokens)
    x = ops.add(x, ops.index(p["text.pos_emb"], slice(0, tokens.shape[1])))
    bias = key_bias(text_mask)
    for i in range(cfg.enc_layers_text):
        x = transformer_layer(p, f"text.layers.{i}", x, x, bias, cfg.h, rate, rng, trace)
    return x


def aed_head(H_T: Tensor, p) -> Tensor:
    """Per-token KEEP/DELETE/CHANGE distribution."""
    return ops.softmax(ops.linear(H_T, p["aed.w"], p["aed.b"]), axis=-1)


def aec_decode_teacher_forced(H_T, text_mask, pair_batch, pair_pos, dec_in, p,
                              cfg: ModelConfig, rng=None, trace=None) -> Tensor | None:
    """Per-step vocabulary distributions (R, T, V) for every change position.

    Row r decodes for hypothesis position ``pair_pos[r]`` of example
    ``pair_batch[r]``; its step inputs are the gold prefix starting at <BOS>.
    Returns None when there are no change positions.
    """
    R = len(pair_batch)
    if R == 0:
        return None
    n = text_mask.sum(axis=1)
    if np.any(pair_pos >= n[pair_batch]) or np.any(pair_pos < 0):
        raise IndexError("change position out of range of its hypothesis")
    rate = cfg.dropout if rng is not None else 0.0
    T = dec_in.shape[1]
    emb = ops.embedding(p["text.tok_emb"], dec_in)
    emb = ops.add(emb, ops.index(p["text.pos_emb"], slice(0, T)))
    # h_T at the change position, repeated for every decoding step
    anchor = ops.index(H_T, (np.repeat(pair_batch[:, None], T, 1), np.repeat(pair_pos[:, None], T, 1)))
    x = ops.linear(ops.concat([emb, anchor], axis=-1), p["aec.in.w"], p["aec.in.b"])
    memory = ops.index(H_T, pair_batch)
    x = decoder_layer(p, "aec.dec", x, causal_bias(T), memory, key_bias(text_mask[pair_batch]),
                      cfg.h, rate, rng, trace)
    return ops.softmax(ops.linear(x, p["aec.out.w"], p["aec.out.b"]), axis=-1)


def cme_block(p, prefix, query, context, context_mask, h, trace=None) -> Tensor:
    """Cross-modal encoder: queries from one modality, keys/values from the other."""
    if query.shape[-1] != context.shape[-1]:
        raise ValueError(f"{prefix}: feature size mismatch {query.shape} vs {context.shape}")
    return transformer_layer(p, prefix, query, context, key_bias(context_mask), h, trace=trace)


def hma(p, side: str, H_spe, spe_mask, H_ST, h, trace=None) -> Tensor:
    """Hybrid-modal attention for modality ``side`` ('s' or 't').

    The mask path sees H_spe laid onto the joint timeline at its own
    modality's positions (zeros elsewhere), concatenated with H_ST on the
    feature axis.
    """
    B, L, d = H_ST.shape
    own = H_spe.shape[1]
    if H_spe.shape[0] != B or H_spe.shape[2] != d or own >= L:
        raise ValueError(f"hma: H_spe {H_spe.shape} incompatible with H_ST {H_ST.shape}")
    share, w = attention(p, f"hma_{side}.attn", H_ST, H_spe, key_bias(spe_mask), h)
    if trace is not None:
        trace.append(w)
    zeros = Tensor(np.zeros((B, L - own, d)))
    canvas = ops.concat([H_spe, zeros] if side == "s" else [zeros, H_spe], axis=1)
    gate = ops.sigmoid(ops.conv1x1(ops.concat([canvas, H_ST], axis=-1),
                                   p[f"hma_{side}.mask.w"], p[f"hma_{side}.mask.b"]))
    return ops.mul(share, gate)


def mir(p, H_S_spe, H_T_spe, H_S, H_T, speech_mask, text_mask, h, trace=None):
    """Modality-invariant representation; returns (H_ST, H_inv)."""
    H_ST = ops.concat([H_S, H_T], axis=1)
    out = H_ST
    for side, H_spe, mask in (("s", H_S_spe, speech_mask), ("t", H_T_spe, text_mask)):
        H_b = hma(p, side, H_spe, mask, H_ST, h, trace)
        branch = ops.conv1x1(H_b, p[f"mir_{side}.conv.w"], p[f"mir_{side}.conv.b"])
        out = ops.add(out, ops.prelu(branch, p[f"mir_{side}.prelu"]))
    return H_ST, norm(p, "mir.ln", out)


def fuse(H_S_spe, H_T_spe, H_inv) -> Tensor:
    return ops.concat([H_S_spe, H_T_spe, H_inv], axis=1)


def classify(features, mask, p) -> Tensor:
    """SoftMax(FC(time-average of features)); ``mask`` marks real rows."""
    pooled = ops.time_avg_pool(features, mask)
    return ops.softmax(ops.linear(pooled, p["cls.w"], p["cls.b"]), axis=-1)


def total_loss(loss_emo, loss_d, loss_e, beta: float, gamma: float) -> Tensor:
    """Loss_emo + beta * (gamma * Loss_d + Loss_e)."""
    aux = ops.add(ops.scale(loss_d, gamma), loss_e)
    return ops.add(loss_emo, ops.scale(aux, beta))


# ---------------------------------------------------------------- full model

@dataclass
class ForwardBundle:
    speech_mask: np.ndarray
    text_mask: np.ndarray
    H_S: Tensor
    H_T: Tensor
    emotion_probs: Tensor
    H_S_spe: Tensor | None = None
    H_T_spe: Tensor | None = None
    H_ST: Tensor | None = None
    H_inv: Tensor | None = None
    H_fus: Tensor | None = None
    aed_probs: Tensor | None = None
    aec_probs: Tensor | None = None
    attention: list[Tensor] = field(default_factory=list)

    def unpadded(self, i: int) -> dict[str, np.ndarray]:
        """Per-example activations with padding rows removed."""
        ms, mt = self.speech_mask[i], self.text_mask[i]
        mst = np.concatenate([ms, mt])
        out = {
            "H_S": self.H_S.data[i][ms],
            "H_T": self.H_T.data[i][mt],
            "emotion_probs": self.emotion_probs.data[i],
        }
        if self.H_ST is not None:
            out.update(
                H_S_spe=self.H_S_spe.data[i][ms],
                H_T_spe=self.H_T_spe.data[i][mt],
                H_ST=self.H_ST.data[i][mst],
                H_inv=self.H_inv.data[i][mst],
                H_fus=self.H_fus.data[i][np.concatenate([ms, mt, mst])],
            )
        if self.aed_probs is not None:
            out["aed_probs"] = self.aed_probs.data[i][mt]
        return out


@dataclass
class Losses:
    emo: Tensor
    d: Tensor
    e: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {"loss_emo": self.emo.item(), "loss_d": self.d.item(),
                "loss_e": self.e.item(), "loss_total": self.total.item()}


def forward(p, cfg: ModelConfig, batch: Batch, mode: str = "full", *,
            aux: bool = True, rng=None) -> ForwardBundle:
    """Run encoders, fusion (or its ablation) and the heads requested by ``mode``.

    ``aux=False`` runs only the emotion path. ``rng`` enables dropout.
    """
    check_mode(mode)
    trace: list[Tensor] = []
    H_S = encode_speech(batch.windows, batch.speech_mask, p, cfg, rng, trace)
    H_T = encode_text(batch.tokens, batch.text_mask, p, cfg, rng, trace)
    bundle = ForwardBundle(batch.speech_mask, batch.text_mask, H_S, H_T, None, attention=trace)

    if mode == "no-mf":
        pooled = ops.concat([ops.time_avg_pool(H_S, batch.speech_mask),
                             ops.time_avg_pool(H_T, batch.text_mask)], axis=-1)
        bundle.emotion_probs = ops.softmax(ops.linear(pooled, p["cls.w"], p["cls.b"]), axis=-1)
    else:
        H_S_spe = cme_block(p, "cme_s", H_S, H_T, batch.text_mask, cfg.h, trace)
        H_T_spe = cme_block(p, "cme_t", H_T, H_S, batch.speech_mask, cfg.h, trace)
        H_ST, H_inv = mir(p, H_S_spe, H_T_spe, H_S, H_T, batch.speech_mask, batch.text_mask,
                          cfg.h, trace)
        H_fus = fuse(H_S_spe, H_T_spe, H_inv)
        fus_mask = np.concatenate([batch.speech_mask, batch.text_mask] * 2, axis=1)
        bundle.H_S_spe, bundle.H_T_spe, bundle.H_ST = H_S_spe, H_T_spe, H_ST
        bundle.H_inv, bundle.H_fus = H_inv, H_fus
        bundle.emotion_probs = classify(H_fus, fus_mask, p)

    if aux:
        if mode != "no-aed":
            bundle.aed_probs = aed_head(H_T, p)
        if mode != "no-aec" and batch.pair_batch is not None:
            bundle.aec_probs = aec_decode_teacher_forced(
                H_T, batch.text_mask, batch.pair_batch, batch.pair_pos, batch.dec_in,
                p, cfg, rng, trace)
    return bundle


def _neg_log_sum(probs: Tensor, idx, scale: float) -> Tensor:
    return ops.scale(ops.sum(ops.log(ops.index(probs, idx))), -scale)


def compute_losses(bundle: ForwardBundle, batch: Batch, beta: float = 0.1,
                   gamma: float = 3.0, mode: str = "full") -> Losses:
    """Summed cross-entropies divided by batch size, and their weighted total."""
    if batch.emotions is None:
        raise ValueError("compute_losses: gold emotions missing")
    inv_b = 1.0 / batch.size
    emo = _neg_log_sum(bundle.emotion_probs, (np.arange(batch.size), batch.emotions), inv_b)
    zero = Tensor(0.0)
    loss_d = loss_e = zero
    if mode != "no-aed":
        if batch.aed_labels is None or bundle.aed_probs is None:
            raise ValueError("compute_losses: AED gold labels missing")
        b_idx, o_idx = np.nonzero(batch.aed_mask)
        if len(b_idx):
            loss_d = _neg_log_sum(bundle.aed_probs, (b_idx, o_idx, batch.aed_labels[b_idx, o_idx]), inv_b)
    if mode != "no-aec":
        if batch.dec_out is None:
            raise ValueError("compute_losses: AEC gold targets missing")
        if bundle.aec_probs is not None:
            r_idx, t_idx = np.nonzero(batch.dec_mask)
            loss_e = _neg_log_sum(bundle.aec_probs, (r_idx, t_idx, batch.dec_out[r_idx, t_idx]), inv_b)
    return Losses(emo, loss_d, loss_e, total_loss(emo, loss_d, loss_e, beta, gamma))


def forward_train(examples, p, cfg: ModelConfig, mode: str = "full", beta: float = 0.1,
                  gamma: float = 3.0, rng=None):
    """Forward pass with auxiliary heads and losses on one example or a list."""
    if not isinstance(examples, (list, tuple)):
        examples = [examples]
    batch = collate(examples, cfg, mode)
    if batch.alignable is None:
        raise ValueError("forward_train needs reference transcripts")
    bundle = forward(p, cfg, batch, mode, rng=rng)
    return bundle, compute_losses(bundle, batch, beta, gamma, mode)


@dataclass
class _Utterance:
    frames: np.ndarray
    asr: tuple
    emotion: int | None = None
    transcript: tuple | None = None


def forward_infer(speech, asr_tokens, p, cfg: ModelConfig, mode: str = "full") -> np.ndarray:
    """Emotion probabilities (e,) from speech frames and ASR tokens only."""
    batch = collate([_Utterance(speech, tuple(asr_tokens))], cfg, mode, aux=False)
    return forward(p, cfg, batch, mode, aux=False).emotion_probs.data[0]


def predict_proba(p, cfg: ModelConfig, batch: Batch, mode: str = "full") -> np.ndarray:
    return forward(p, cfg, batch, mode, aux=False).emotion_probs.data
