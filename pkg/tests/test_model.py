"""Encoder and classifier: hand-traced convolutions, pooling, checkpoints."""

import numpy as np
import pytest

import textda.autodiff as ad
from textda.errors import ConfigError, DataError
from textda.model import (
    ModelParams,
    apply_max_norm,
    build_windows,
    classify,
    encode_batch,
    forward_eval,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from textda.rng import named_rng


def _toy_params():
    """Scalar embeddings a=1, b=2, c=3 (ids 2, 3, 4), one summing filter."""
    return ModelParams(
        E=np.array([[0.0], [0.0], [1.0], [2.0], [3.0]]),
        W=np.array([[1.0, 1.0, 1.0]]),
        b=np.array([0.0]),
        F_w=np.array([[1.0], [0.0], [-1.0]]),
        F_b=np.zeros(3),
        window=3,
    )


def _encode(params, mat, lengths):
    tape = ad.Tape()
    leaves = params.leaves(tape)
    return encode_batch(tape, leaves, np.asarray(mat), np.asarray(lengths))


# -------------------------------------------------------------------- windows


def test_build_windows_same_padding():
    idx = build_windows(np.array([[5, 6, 7]]), window=3)
    assert np.array_equal(idx, [[[0, 5, 6], [5, 6, 7], [6, 7, 0]]])
    idx = build_windows(np.array([[5, 6]]), window=1)
    assert np.array_equal(idx, [[[5], [6]]])
    idx = build_windows(np.array([[5]]), window=5)
    assert np.array_equal(idx, [[[0, 0, 5, 0, 0]]])
    with pytest.raises(ConfigError):
        build_windows(np.array([[1]]), window=2)


# ----------------------------------------------------------- hand-traced conv


def test_encode_hand_trace_a_b_c_b():
    # tokens a b c b -> window sums [0+1+2, 1+2+3, 2+3+2, 3+2+0] = [3, 6, 7, 5]
    enc = _encode(_toy_params(), [[2, 3, 4, 3]], [4])
    assert np.allclose(enc.H.data.reshape(4), [3.0, 6.0, 7.0, 5.0])
    assert enc.xi.data.item() == 7.0
    assert enc.argmax.item() == 2


def test_encode_hand_trace_a_b_c_c():
    # tokens a b c c -> window sums [3, 6, 8, 6]; max 8 at position 2
    enc = _encode(_toy_params(), [[2, 3, 4, 4]], [4])
    assert np.allclose(enc.H.data.reshape(4), [3.0, 6.0, 8.0, 6.0])
    assert enc.xi.data.item() == 8.0
    assert enc.argmax.item() == 2


def test_pooling_masks_padding_and_breaks_ties_low():
    # doc 2 is "b b" padded to length 4: positions 0 and 1 both activate 4
    enc = _encode(_toy_params(), [[2, 3, 4, 3], [3, 3, 0, 0]], [4, 2])
    assert enc.xi.data[1].item() == 4.0
    assert enc.argmax[1].item() == 0
    # the padded positions hold activations too but never win the max
    assert enc.xi.data[0].item() == 7.0


def test_classify_rows_are_distributions():
    params = _toy_params()
    tape = ad.Tape()
    leaves = params.leaves(tape)
    enc = encode_batch(tape, leaves, np.array([[2, 3, 4, 3]]), np.array([4]))
    probs = classify(tape, leaves, enc.xi)
    assert probs.data.shape == (1, 3)
    assert abs(probs.data.sum() - 1.0) < 1e-12
    assert np.all(probs.data > 0.0)


def test_forward_eval_is_deterministic():
    params = init_params(
        named_rng(0, "embeddings").uniform(-0.25, 0.25, size=(9, 4)),
        window=3, hidden=5, n_classes=3, rng=named_rng(0, "init"),
    )
    mat = np.array([[2, 3, 4, 5, 6], [7, 8, 2, 0, 0]])
    lengths = np.array([5, 3])
    p1, enc1 = forward_eval(params, mat, lengths)
    p2, enc2 = forward_eval(params, mat, lengths)
    assert np.array_equal(p1, p2)
    assert np.array_equal(enc1.argmax, enc2.argmax)
    assert np.allclose(p1.sum(axis=1), 1.0)


def test_training_dropout_differs_from_eval():
    params = init_params(
        named_rng(1, "embeddings").uniform(-0.25, 0.25, size=(9, 4)),
        window=3, hidden=16, n_classes=3, rng=named_rng(1, "init"),
    )
    mat = np.array([[2, 3, 4, 5]])
    lengths = np.array([4])
    tape = ad.Tape()
    leaves = params.leaves(tape)
    dropped = encode_batch(tape, leaves, mat, lengths, dropout_rate=0.5,
                           training=True, rng=named_rng(2, "dropout"))
    clean = _encode(params, mat, lengths)
    assert not np.array_equal(dropped.xi.data, clean.xi.data)
    # eval mode ignores the rate entirely
    tape2 = ad.Tape()
    leaves2 = params.leaves(tape2)
    off = encode_batch(tape2, leaves2, mat, lengths, dropout_rate=0.5, training=False)
    assert np.array_equal(off.xi.data, clean.xi.data)


# --------------------------------------------------------------- initializers


def test_init_params_glorot_bounds_and_zero_biases():
    E = named_rng(3, "embeddings").uniform(-0.25, 0.25, size=(20, 6))
    params = init_params(E, window=5, hidden=8, n_classes=3, rng=named_rng(3, "init"))
    assert np.array_equal(params.E, E)
    assert params.E.dtype == np.float64
    s_w = np.sqrt(6.0 / (5 * 6 + 8))
    assert np.all(np.abs(params.W) <= s_w)
    s_f = np.sqrt(6.0 / (8 + 3))
    assert np.all(np.abs(params.F_w) <= s_f)
    assert np.all(params.b == 0.0) and np.all(params.F_b == 0.0)
    assert (params.vocab_size, params.embedding_dim, params.hidden, params.n_classes) == (20, 6, 8, 3)


def test_model_params_validation():
    good = _toy_params()
    with pytest.raises(ConfigError):
        ModelParams(E=good.E, W=good.W, b=good.b, F_w=good.F_w, F_b=good.F_b, window=2)
    with pytest.raises(ConfigError):
        ModelParams(E=good.E, W=np.ones((1, 4)), b=good.b, F_w=good.F_w, F_b=good.F_b, window=3)
    with pytest.raises(ConfigError):
        ModelParams(E=good.E, W=good.W, b=good.b, F_w=good.F_w, F_b=np.zeros(2), window=3)


def test_apply_max_norm_projects_in_place():
    rows = np.array([[3.0, 4.0], [0.3, 0.4]])
    apply_max_norm(rows, 3.0)
    assert np.allclose(rows[0], [1.8, 2.4])
    assert np.allclose(np.linalg.norm(rows[0]), 3.0)
    assert np.array_equal(rows[1], [0.3, 0.4])
    with pytest.raises(ConfigError):
        apply_max_norm(rows, 0.0)


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    params = init_params(
        named_rng(5, "embeddings").uniform(-0.25, 0.25, size=(12, 4)),
        window=3, hidden=6, n_classes=3, rng=named_rng(5, "init"),
    )
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, vocab_hash="ab" * 32, path=path)
    back, header = load_checkpoint(path)
    for name, arr in params.arrays().items():
        got = back.arrays()[name]
        assert got.dtype == np.float64
        assert arr.shape == got.shape
        assert np.array_equal(arr, got) and arr.tobytes() == got.tobytes()
    assert back.window == params.window
    assert header["vocab_hash"] == "ab" * 32
    assert header["vocab_size"] == 12 and header["hidden"] == 6
    # same params saved twice produce identical bytes
    path2 = tmp_path / "model2.ckpt"
    save_checkpoint(params, vocab_hash="ab" * 32, path=path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    params = _toy_params()
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, vocab_hash="00", path=path)
    blob = path.read_bytes()
    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(blob[:-8])
    with pytest.raises(DataError, match="bytes"):
        load_checkpoint(truncated)
    garbled = tmp_path / "garbled.ckpt"
    garbled.write_bytes(b"not json\n" + blob)
    with pytest.raises(DataError):
        load_checkpoint(garbled)
    nover = tmp_path / "nover.ckpt"
    nover.write_bytes(blob.replace(b'"format_version": 1', b'"format_version": 9'))
    with pytest.raises(DataError, match="version"):
        load_checkpoint(nover)
    with pytest.raises(DataError, match="not found"):
        load_checkpoint(tmp_path / "missing.ckpt")
