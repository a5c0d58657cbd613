from .config import MODES, ModelConfig, check_mode, init_params, is_aux, param_shapes
from .network import (
    Batch,
    ForwardBundle,
    InputError,
    Losses,
    aec_decode_teacher_forced,
    aed_head,
    classify,
    cme_block,
    collate,
    compute_losses,
    encode_speech,
    encode_text,
    forward,
    forward_infer,
    forward_train,
    fuse,
    hma,
    mir,
    predict_proba,
    total_loss,
)
