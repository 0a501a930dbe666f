"""Character-to-word encoders (IntNet, char-LSTM, char-CNN) with a BiLSTM-CRF
sequence tagger. The heavy lifting lives in the compiled ``_core`` module."""

from ._core import (  # noqa: F401
    EncoderConfig,
    EncoderKind,
    IntnetError,
    Tagger,
    bioes_consistent,
    clip_factor,
    crf_brute_force_partition,
    crf_log_partition,
    crf_viterbi,
    encode_word,
    encoder_output_dim,
    entity_f1,
    from_bioes,
    gradcheck,
    lr_at,
    to_bioes,
    token_accuracy,
)

__version__ = "0.1.0"
