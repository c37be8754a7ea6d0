"""Learning-to-copy automatic post-editing."""

from ._core import (
    BpeModel,
    Config,
    ConfigError,
    ContractError,
    ParseError,
    System,
    SystemScores,
    bleu,
    bpe_join,
    bpe_learn,
    copying_accuracy,
    corpus_ter,
    join_tokens,
    lcs_labels,
    lcs_length,
    prediction_accuracy,
    split_tokens,
    synth_corpus,
    ter,
)

__all__ = [
    "BpeModel",
    "Config",
    "ConfigError",
    "ContractError",
    "ParseError",
    "System",
    "SystemScores",
    "bleu",
    "bpe_join",
    "bpe_learn",
    "copying_accuracy",
    "corpus_ter",
    "join_tokens",
    "lcs_labels",
    "lcs_length",
    "prediction_accuracy",
    "split_tokens",
    "synth_corpus",
    "ter",
]
