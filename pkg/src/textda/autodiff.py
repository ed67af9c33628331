"""Minimal reverse-mode automatic differentiation on a fixed op set.

A Tape records one forward computation as an ordered list of backward
closures; Tape.backward replays them in reverse, accumulating into each
tensor's .grad buffer. Everything is float64. The op set is exactly what the
classifier and its losses need, each backward hand-derived and covered by
grad_check (central finite differences) in the test suite.

Conventions fixed here and relied on elsewhere:
  relu subgradient at 0 is 0; max pooling breaks ties toward the lowest
  position index; dropout is inverted (eval-mode forward is the identity);
  gradients of tensors a loss never touched stay exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError

__all__ = [
    "Tape",
    "Tensor",
    "affine",
    "relu",
    "softmax",
    "max_over_time",
    "max_over_time_batch",
    "dropout",
    "l1_normalize",
    "batch_mean",
    "embed_windows",
    "add",
    "mul",
    "vsum",
    "scale",
    "grad_check",
    "GradCheckReport",
]


class Tensor:
    """Array plus gradient buffer, bound to the tape that produced it."""

    __slots__ = ("data", "grad", "tape", "softmax_logits")

    def __init__(self, data, tape: "Tape"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.tape = tape
        # set by softmax() so cross-entropy style losses can differentiate
        # through the fused log-sum-exp path
        self.softmax_logits: "Tensor | None" = None

    @property
    def shape(self):
        return self.data.shape


class Tape:
    def __init__(self):
        self._steps: list = []
        self._finished = False

    def leaf(self, data) -> Tensor:
        """Wrap a parameter array (no copy) with a fresh zero gradient."""
        return Tensor(data, self)

    # used by op implementations
    def wrap(self, data) -> Tensor:
        return Tensor(data, self)

    def record(self, backward) -> None:
        self._steps.append(backward)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) into .grad for every recorded tensor."""
        if loss.tape is not self:
            raise NumericalError("backward: loss tensor belongs to a different tape")
        if loss.data.shape != ():
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
        if not np.isfinite(loss.data):
            raise NumericalError(f"backward: loss is not finite ({loss.data!r})")
        if self._finished:
            raise NumericalError("backward: tape already consumed; build a fresh tape per evaluation")
        self._finished = True
        loss.grad = np.ones_like(loss.data)
        for step in reversed(self._steps):
            step()


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise NumericalError("op inputs belong to different tapes")
    return tape


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """y = x W^T + b for a batch [M, n], or y = W x + b for a vector [n]."""
    tape = _same_tape(x, W, b)
    if W.data.ndim != 2 or b.data.ndim != 1 or W.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"affine: W {W.data.shape} and b {b.data.shape} are inconsistent")
    m, n = W.data.shape
    if x.data.ndim == 1:
        if x.data.shape[0] != n:
            raise ShapeError(f"affine: W {W.data.shape} cannot multiply x {x.data.shape}")
        out = tape.wrap(W.data @ x.data + b.data)

        def back():
            g = out.grad
            x.grad += W.data.T @ g
            W.grad += np.outer(g, x.data)
            b.grad += g

    elif x.data.ndim == 2:
        if x.data.shape[1] != n:
            raise ShapeError(f"affine: W {W.data.shape} cannot multiply batch {x.data.shape}")
        out = tape.wrap(x.data @ W.data.T + b.data)

        def back():
            g = out.grad
            x.grad += g @ W.data
            W.grad += g.T @ x.data
            b.grad += g.sum(axis=0)

    else:
        raise ShapeError(f"affine: x must be 1-D or 2-D, got shape {x.data.shape}")
    tape.record(back)
    return out


def relu(x: Tensor) -> Tensor:
    out = x.tape.wrap(np.maximum(x.data, 0.0))
    mask = x.data > 0.0  # subgradient at 0 is 0

    def back():
        x.grad += out.grad * mask

    x.tape.record(back)
    return out


def softmax(x: Tensor) -> Tensor:
    """Row-wise stable softmax of logits ([C] or [B, C])."""
    if x.data.ndim not in (1, 2):
        raise ShapeError(f"softmax: logits must be 1-D or 2-D, got shape {x.data.shape}")
    z = x.data if x.data.ndim == 2 else x.data[None, :]
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = x.tape.wrap(p if x.data.ndim == 2 else p[0])
    out.softmax_logits = x

    def back():
        g = out.grad if out.grad.ndim == 2 else out.grad[None, :]
        dot = (g * p).sum(axis=1, keepdims=True)
        dx = p * (g - dot)
        x.grad += dx if x.data.ndim == 2 else dx[0]

    x.tape.record(back)
    return out


def max_over_time(H: Tensor) -> tuple[Tensor, np.ndarray]:
    """Column-wise max of [n, h] -> ([h], argmax row per column).

    Ties resolve to the lowest row index. Gradient routes only to the winning
    rows, so total gradient mass is conserved.
    """
    if H.data.ndim != 2 or H.data.shape[0] < 1:
        raise ShapeError(f"max_over_time: need a nonempty [n, h] matrix, got shape {H.data.shape}")
    arg = H.data.argmax(axis=0)  # np.argmax returns the first (lowest) maximizer
    cols = np.arange(H.data.shape[1])
    out = H.tape.wrap(H.data[arg, cols])

    def back():
        np.add.at(H.grad, (arg, cols), out.grad)

    H.tape.record(back)
    return out, arg


def max_over_time_batch(H: Tensor, n_docs: int, positions: int, lengths: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Per-document column-wise max over valid positions.

    H is [n_docs * positions, h] (document-major). Positions at or beyond a
    document's length are excluded from its max. Returns ([n_docs, h] maxima,
    [n_docs, h] winning positions).
    """
    if H.data.ndim != 2 or H.data.shape[0] != n_docs * positions:
        raise ShapeError(
            f"max_over_time_batch: H {H.data.shape} does not factor as {n_docs}x{positions} rows"
        )
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (n_docs,) or lengths.min() < 1 or lengths.max() > positions:
        raise ShapeError(f"max_over_time_batch: bad lengths (shape {lengths.shape})")
    h = H.data.shape[1]
    data3 = H.data.reshape(n_docs, positions, h)
    valid = np.arange(positions)[None, :] < lengths[:, None]
    masked = np.where(valid[:, :, None], data3, -np.inf)
    arg = masked.argmax(axis=1)  # first maximizer along positions
    out = H.tape.wrap(np.take_along_axis(data3, arg[:, None, :], axis=1)[:, 0, :])
    rows = np.arange(n_docs)[:, None]
    cols = np.arange(h)[None, :]

    def back():
        g3 = H.grad.reshape(n_docs, positions, h)
        np.add.at(g3, (rows, arg, cols), out.grad)

    H.tape.record(back)
    return out, arg


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: entries zeroed with probability `rate`, survivors
    scaled by 1/(1-rate). Identity (same tensor, no RNG draw) when not
    training or rate is 0."""
    if not (0.0 <= rate < 1.0):
        raise NumericalError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise NumericalError("dropout: training mode needs an rng")
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = x.tape.wrap(x.data * keep)

    def back():
        x.grad += out.grad * keep

    x.tape.record(back)
    return out


def l1_normalize(v: Tensor, eps: float = 1e-6) -> Tensor:
    """(v + eps) / sum(v + eps) for a nonnegative vector."""
    if v.data.ndim != 1:
        raise ShapeError(f"l1_normalize: need a vector, got shape {v.data.shape}")
    if v.data.min() < 0.0:
        raise NumericalError("l1_normalize: negative entry (input is expected to be post-relu)")
    u = v.data + eps
    s = u.sum()
    if s <= 0.0:
        raise NumericalError("l1_normalize: zero mass; use eps > 0 or a nonzero vector")
    y = u / s
    out = v.tape.wrap(y)

    def back():
        g = out.grad
        v.grad += (g - (g * y).sum()) / s

    v.tape.record(back)
    return out


def batch_mean(X: Tensor) -> Tensor:
    """Mean over rows: [B, h] -> [h]."""
    if X.data.ndim != 2:
        raise ShapeError(f"batch_mean: need [B, h], got shape {X.data.shape}")
    n = X.data.shape[0]
    out = X.tape.wrap(X.data.mean(axis=0))

    def back():
        X.grad += out.grad[None, :] / n

    X.tape.record(back)
    return out


def embed_windows(E: Tensor, idx_win: np.ndarray) -> Tensor:
    """Gather and concatenate embedding rows for every window.

    idx_win is an integer array [n_docs, positions, l]; the result is
    [n_docs * positions, l * d] with each row the concatenation of the l
    embedding vectors of one window. Backward scatter-adds into E.grad, so
    repeated tokens accumulate correctly.
    """
    idx_win = np.asarray(idx_win)
    if idx_win.ndim != 3:
        raise ShapeError(f"embed_windows: window index array must be 3-D, got shape {idx_win.shape}")
    V, d = E.data.shape
    if idx_win.size and (idx_win.min() < 0 or idx_win.max() >= V):
        raise NumericalError(
            f"embed_windows: token index out of range [0, {V}) "
            f"(min {idx_win.min()}, max {idx_win.max()})"
        )
    n_docs, positions, l = idx_win.shape
    gathered = E.data[idx_win]  # [n_docs, positions, l, d]
    out = E.tape.wrap(gathered.reshape(n_docs * positions, l * d))

    def back():
        np.add.at(E.grad, idx_win, out.grad.reshape(n_docs, positions, l, d))

    E.tape.record(back)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
    out = tape.wrap(a.data + b.data)

    def back():
        a.grad += out.grad
        b.grad += out.grad

    tape.record(back)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    tape = _same_tape(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} differ")
    out = tape.wrap(a.data * b.data)

    def back():
        a.grad += out.grad * b.data
        b.grad += out.grad * a.data

    tape.record(back)
    return out


def vsum(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar."""
    out = x.tape.wrap(float(x.data.sum()))

    def back():
        x.grad += out.grad

    x.tape.record(back)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = x.tape.wrap(c * x.data)

    def back():
        x.grad += c * out.grad

    x.tape.record(back)
    return out


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tol: float
    h: float
    worst_param: str = ""
    worst_index: int = -1
    per_param: dict = field(default_factory=dict)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [f"gradient check: {verdict} (max rel error {self.max_rel_error:.3e}, tol {self.tol:.1e})"]
        for name, err in sorted(self.per_param.items()):
            lines.append(f"  {name:12s} max rel error {err:.3e}")
        if not self.passed:
            lines.append(f"  worst: {self.worst_param}[{self.worst_index}]")
        return "\n".join(lines)


def grad_check(loss_fn, params: dict, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    loss_fn(tape, leaves) must build and return a scalar Tensor from the
    dict of leaf tensors; it must be deterministic (no dropout). Relative
    error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    work = {name: np.array(arr, dtype=np.float64) for name, arr in params.items()}

    def evaluate() -> float:
        tape = Tape()
        leaves = {name: tape.leaf(arr) for name, arr in work.items()}
        out = loss_fn(tape, leaves)
        if out.data.shape != ():
            raise ShapeError(f"grad_check: loss_fn must return a scalar, got shape {out.data.shape}")
        if not np.isfinite(out.data):
            raise NumericalError("grad_check: loss is not finite")
        return float(out.data)

    tape = Tape()
    leaves = {name: tape.leaf(arr) for name, arr in work.items()}
    out = loss_fn(tape, leaves)
    if out.data.shape != ():
        raise ShapeError(f"grad_check: loss_fn must return a scalar, got shape {out.data.shape}")
    tape.backward(out)
    analytic = {name: leaves[name].grad.copy() for name in work}

    report = GradCheckReport(passed=True, max_rel_error=0.0, tol=tol, h=h)
    for name, arr in work.items():
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = evaluate()
            flat[i] = orig - h
            f_minus = evaluate()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            rel = float(abs(a_flat[i] - numeric) / denom)
            if rel > worst:
                worst = rel
            if rel > report.max_rel_error:
                report.max_rel_error = rel
                report.worst_param = name
                report.worst_index = i
        report.per_param[name] = worst
    report.passed = report.max_rel_error <= tol
    return report
