"""Smoke tests for the Python module: a thin pass over each exposed surface."""

import math

import numpy as np
import pytest

import intnet


def test_bioes_round_trip():
    labels = ["B-PER", "I-PER", "O", "B-LOC"]
    bioes = intnet.to_bioes(labels)
    assert bioes == ["B-PER", "E-PER", "O", "S-LOC"]
    assert intnet.bioes_consistent(bioes)
    spans, repairs = intnet.from_bioes(bioes)
    assert repairs == 0
    assert sorted(spans) == [("LOC", 3, 3), ("PER", 0, 1)]


def test_from_bioes_repairs_stray_tags():
    spans, repairs = intnet.from_bioes(["E-PER"])
    assert spans == [("PER", 0, 0)]
    assert repairs == 1


def test_crf_partition_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = int(rng.integers(1, 5))
        t = int(rng.integers(1, 7))
        emissions = rng.standard_normal((t, k))
        transitions = rng.standard_normal((k + 2, k + 2))
        dp = intnet.crf_log_partition(emissions, transitions)
        bf = intnet.crf_brute_force_partition(emissions, transitions)
        assert abs(dp - bf) < 1e-10


def test_viterbi_prefers_high_emissions():
    emissions = np.array([[5.0, 0.0], [0.0, 5.0], [5.0, 0.0]])
    transitions = np.zeros((4, 4))
    tags, score = intnet.crf_viterbi(emissions, transitions)
    assert tags == [0, 1, 0]
    assert math.isclose(score, 15.0)


def test_entity_f1():
    gold = [["B-PER", "E-PER", "O", "S-LOC"]]
    pred = [["B-PER", "E-PER", "O", "O"]]
    report = intnet.entity_f1(pred, gold)
    assert math.isclose(report["precision"], 1.0)
    assert math.isclose(report["recall"], 0.5)
    assert math.isclose(report["f1"], 2 / 3, rel_tol=1e-12)
    assert math.isclose(intnet.token_accuracy(pred, gold), 0.75)


def test_schedule_values():
    assert math.isclose(intnet.lr_at(0), 0.01)
    assert math.isclose(intnet.lr_at(20), 0.005)
    assert math.isclose(intnet.clip_factor(10.0, 5.0), 0.5)
    assert intnet.clip_factor(3.0, 5.0) == 1.0


def test_encoder_output_dim():
    cfg = intnet.EncoderConfig()
    assert intnet.encoder_output_dim(cfg) == 192
    cfg.layers = 9
    assert intnet.encoder_output_dim(cfg) == 288
    cfg.kind = intnet.EncoderKind.char_lstm
    assert intnet.encoder_output_dim(cfg) == 50


def test_encode_word_is_deterministic_and_length_free():
    cfg = intnet.EncoderConfig()
    cfg.d_char = 8
    cfg.m0 = 4
    cfg.m_block = 2
    a = intnet.encode_word("word", cfg, seed=3)
    b = intnet.encode_word("word", cfg, seed=3)
    c = intnet.encode_word("internationalization", cfg, seed=3)
    assert a.shape == c.shape == (intnet.encoder_output_dim(cfg),)
    np.testing.assert_array_equal(a, b)


def test_empty_word_raises():
    with pytest.raises(Exception):
        intnet.encode_word("", intnet.EncoderConfig())
