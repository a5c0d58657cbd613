import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import pytest  # noqa: E402

from mfaec.model import ModelConfig  # noqa: E402
from mfaec.synthdata import CorpusSpec, CorruptionSpec, build_examples  # noqa: E402

ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k.split()[0])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


TINY_SPEC = CorpusSpec(vocab_size=12, n_emotions=4, keywords_per_emotion=1, min_len=3,
                       max_len=4, frame_dim=3, frames_per_token=2, sigma=0.3, seed=1)
TINY_CORRUPTION = CorruptionSpec(p_sub=0.3, p_del=0.2, p_ins=0.3, vocab_size=12, seed=1)


def tiny_config(**kw) -> ModelConfig:
    base = dict(d=8, h=2, enc_layers_speech=1, enc_layers_text=1, frame_dim=3, downsample=2,
                vocab_size=12, n_emotions=4, d_max=4, d_ff=8, max_text_len=8, max_speech_len=8)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_examples():
    return build_examples(TINY_SPEC, TINY_CORRUPTION, 40)
