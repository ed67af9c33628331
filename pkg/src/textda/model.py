"""One-layer CNN text classifier.

encode: embedding lookup, window concatenation (window l, "same" padding of
(l-1)/2 positions per side), affine + ReLU per position, max-over-time
pooling to a feature vector xi, dropout on xi. classify: softmax affine head
on xi. The pooling argmax per filter is kept as window metadata so filters
can be traced back to the trigrams that fired them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import PAD_INDEX
from .errors import ConfigError, DataError

__all__ = [
    "ModelParams",
    "EncodedBatch",
    "init_params",
    "build_windows",
    "encode_batch",
    "classify",
    "forward_eval",
    "apply_max_norm",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1
PARAM_ORDER = ("E", "W", "b", "F_w", "F_b")


@dataclass
class ModelParams:
    """E [V, d] embeddings; W [h, l*d], b [h] convolution; F_w [C, h],
    F_b [C] output head; window is the convolution width l."""

    E: np.ndarray
    W: np.ndarray
    b: np.ndarray
    F_w: np.ndarray
    F_b: np.ndarray
    window: int

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and >= 1, got {self.window}")
        V, d = self.E.shape
        h, ld = self.W.shape
        if ld != self.window * d:
            raise ConfigError(f"W expects rows of length window*d = {self.window * d}, got {ld}")
        if self.b.shape != (h,) or self.F_w.shape[1] != h or self.F_b.shape != (self.F_w.shape[0],):
            raise ConfigError("inconsistent parameter shapes")

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.E.shape[1]

    @property
    def hidden(self) -> int:
        return self.W.shape[0]

    @property
    def n_classes(self) -> int:
        return self.F_w.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def copy(self) -> "ModelParams":
        return ModelParams(
            E=self.E.copy(), W=self.W.copy(), b=self.b.copy(),
            F_w=self.F_w.copy(), F_b=self.F_b.copy(), window=self.window,
        )

    def leaves(self, tape: ad.Tape) -> dict[str, ad.Tensor]:
        return {name: tape.leaf(arr) for name, arr in self.arrays().items()}


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_out, fan_in))


def init_params(embeddings: np.ndarray, window: int, hidden: int, n_classes: int,
                rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weight matrices, zero biases; the embedding matrix is
    taken as provided (pretrained or random-initialized by the loader)."""
    E = np.array(embeddings, dtype=np.float64)
    if E.ndim != 2:
        raise ConfigError(f"embeddings must be 2-D, got shape {E.shape}")
    d = E.shape[1]
    W = _glorot(rng, hidden, window * d)
    F_w = _glorot(rng, n_classes, hidden)
    return ModelParams(
        E=E, W=W, b=np.zeros(hidden), F_w=F_w, F_b=np.zeros(n_classes), window=window,
    )


def build_windows(mat: np.ndarray, window: int) -> np.ndarray:
    """Window token-index array [B, P, l] with "same" padding, so position i
    covers tokens i-(l-1)/2 .. i+(l-1)/2 (out-of-range slots are PAD)."""
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be odd and >= 1, got {window}")
    B, P = mat.shape
    half = (window - 1) // 2
    padded = np.full((B, P + 2 * half), PAD_INDEX, dtype=np.int64)
    padded[:, half : half + P] = mat
    idx_win = np.empty((B, P, window), dtype=np.int64)
    for j in range(window):
        idx_win[:, :, j] = padded[:, j : j + P]
    return idx_win


@dataclass
class EncodedBatch:
    xi: ad.Tensor            # [B, h] pooled features (post-dropout in training)
    argmax: np.ndarray       # [B, h] winning position per filter
    H: ad.Tensor             # [B*P, h] post-ReLU activations at every position
    idx_win: np.ndarray      # [B, P, l] window token indices
    lengths: np.ndarray      # [B]


def encode_batch(
    tape: ad.Tape,
    leaves: dict[str, ad.Tensor],
    mat: np.ndarray,
    lengths: np.ndarray,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> EncodedBatch:
    B, P = mat.shape
    window = leaves["W"].data.shape[1] // leaves["E"].data.shape[1]
    idx_win = build_windows(mat, window)
    xhat = ad.embed_windows(leaves["E"], idx_win)          # [B*P, l*d]
    H = ad.relu(ad.affine(xhat, leaves["W"], leaves["b"]))  # [B*P, h]
    xi, argmax = ad.max_over_time_batch(H, B, P, lengths)
    xi = ad.dropout(xi, dropout_rate, training, rng)
    return EncodedBatch(xi=xi, argmax=argmax, H=H, idx_win=idx_win, lengths=lengths)


def classify(tape: ad.Tape, leaves: dict[str, ad.Tensor], xi: ad.Tensor) -> ad.Tensor:
    """Class distribution rows: softmax(F_w xi + F_b)."""
    return ad.softmax(ad.affine(xi, leaves["F_w"], leaves["F_b"]))


def forward_eval(params: ModelParams, mat: np.ndarray, lengths: np.ndarray) -> tuple[np.ndarray, EncodedBatch]:
    """Deterministic eval-mode forward pass (dropout off); returns the class
    probabilities as a plain array plus the encoding details."""
    tape = ad.Tape()
    leaves = params.leaves(tape)
    enc = encode_batch(tape, leaves, mat, lengths, dropout_rate=0.0, training=False)
    probs = classify(tape, leaves, enc.xi)
    return probs.data, enc


def apply_max_norm(rows: np.ndarray, max_norm: float) -> None:
    """Project each row onto the L2 ball of radius max_norm, in place."""
    if not (max_norm > 0.0):
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    norms = np.sqrt((rows * rows).sum(axis=1))
    over = norms > max_norm
    if over.any():
        rows[over] *= (max_norm / norms[over])[:, None]


def save_checkpoint(params: ModelParams, vocab_hash: str, path) -> None:
    """Header line of JSON (format version, dimensions, vocab content hash)
    followed by the parameter arrays as little-endian float64, in the fixed
    order E, W, b, F_w, F_b."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "vocab_size": params.vocab_size,
        "embedding_dim": params.embedding_dim,
        "window": params.window,
        "hidden": params.hidden,
        "n_classes": params.n_classes,
        "vocab_hash": vocab_hash,
    }
    with Path(path).open("wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for name in PARAM_ORDER:
            arr = params.arrays()[name]
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"checkpoint not found: {p}")
    blob = p.read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise DataError(f"checkpoint {p}: missing header line")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"checkpoint {p}: bad header ({e})") from e
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"checkpoint {p}: unsupported format version {header.get('format_version')!r}")
    try:
        V, d = header["vocab_size"], header["embedding_dim"]
        l, h, C = header["window"], header["hidden"], header["n_classes"]
    except KeyError as e:
        raise DataError(f"checkpoint {p}: header missing field {e}") from e
    shapes = {"E": (V, d), "W": (h, l * d), "b": (h,), "F_w": (C, h), "F_b": (C,)}
    body = blob[nl + 1 :]
    need = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if len(body) != need:
        raise DataError(f"checkpoint {p}: expected {need} bytes of parameters, found {len(body)}")
    arrays = {}
    offset = 0
    for name in PARAM_ORDER:
        shape = shapes[name]
        count = int(np.prod(shape))
        arrays[name] = (
            np.frombuffer(body, dtype="<f8", count=count, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset += count * 8
    params = ModelParams(window=l, **arrays)
    return params, header
