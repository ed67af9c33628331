"""Training objectives.

Four scalar losses over a minibatch triple, combined as

    total = L + lambda1 * J + lambda2 * Gamma + w_t * Omega

where L is labeled-source cross-entropy, J pulls the source and target mean
feature vectors together (symmetric KL of their L1 normalizations, or an RBF
MMD for the baseline), Gamma is the entropy of target predictions, and Omega
is cross-entropy against the self-ensemble's one-hot targets with no gradient
into the targets. w_t follows a Gaussian ramp from near 0 to lambda3.

Cross-entropy and entropy differentiate through the fused log-sum-exp path
whenever the prediction tensor came from softmax(); hand-built distributions
fall back to clamped logs (clamp [1e-12, 1] inside the log only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, batch_mean, l1_normalize, scale
from .errors import ConfigError, NumericalError, ShapeError

__all__ = [
    "CLAMP_MIN",
    "CLAMP_MAX",
    "VARIANTS",
    "LossWeights",
    "LossBreakdown",
    "source_cross_entropy",
    "entropy_min_loss",
    "bootstrap_loss",
    "symmetric_kl",
    "feature_adaptation_loss",
    "mmd_rbf",
    "median_heuristic_sigma",
    "rampup_weight",
    "total_loss",
    "compose_total",
]

CLAMP_MIN = 1e-12
CLAMP_MAX = 1.0

# variant name -> which of (lambda1, lambda2, lambda3) are forced to zero
VARIANTS = {
    "NaiveNN": (True, True, True),
    "FANN": (False, True, True),
    "MMD-baseline": (False, True, True),
    "DAS-EM": (False, False, True),
    "DAS-SE": (False, True, False),
    "DAS": (False, False, False),
}


@dataclass(frozen=True)
class LossWeights:
    lambda1: float
    lambda2: float
    lambda3: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"LossWeights: {name} must be finite and >= 0, got {v}")

    @classmethod
    def for_variant(cls, variant: str, lambda1: float, lambda2: float, lambda3: float) -> "LossWeights":
        """Apply the variant's zero-forcing to the configured weights."""
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}")
        z1, z2, z3 = VARIANTS[variant]
        return cls(
            0.0 if z1 else float(lambda1),
            0.0 if z2 else float(lambda2),
            0.0 if z3 else float(lambda3),
        )


@dataclass(frozen=True)
class LossBreakdown:
    """One iteration's (or epoch's) components plus the composed total."""

    L: float
    J: float
    Gamma: float
    Omega: float
    w_t: float
    total: float


def _check_rows_onehot(name: str, y: np.ndarray, cols: int) -> None:
    if y.ndim != 2 or y.shape[1] != cols:
        raise ShapeError(f"{name}: expected [B, {cols}] one-hot rows, got shape {y.shape}")
    is01 = np.all((y == 0.0) | (y == 1.0))
    if not is01 or not np.all(y.sum(axis=1) == 1.0):
        raise NumericalError(f"{name}: rows must be exactly one-hot")


def _as_const(y) -> np.ndarray:
    # accept a Tensor for convenience; it is treated as constant (stop-gradient)
    data = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    return data


def _log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _cross_entropy(name: str, y_const: np.ndarray, y_pred: Tensor) -> Tensor:
    """-(1/B) sum_i sum_c y[i,c] log y_pred[i,c], one-hot y."""
    p = y_pred.data if y_pred.data.ndim == 2 else y_pred.data[None, :]
    y = y_const if y_const.ndim == 2 else y_const[None, :]
    if y.shape != p.shape:
        raise ShapeError(f"{name}: labels {y.shape} and predictions {p.shape} differ")
    _check_rows_onehot(name, y, p.shape[1])
    B = p.shape[0]
    logits = y_pred.softmax_logits
    tape = y_pred.tape
    if logits is not None:
        x = logits.data if logits.data.ndim == 2 else logits.data[None, :]
        lse = x.max(axis=1, keepdims=True) + np.log(
            np.exp(x - x.max(axis=1, keepdims=True)).sum(axis=1, keepdims=True)
        )
        out = tape.wrap(float((y * (lse - x)).sum() / B))

        def back():
            dx = (p - y) * (out.grad / B)
            logits.grad += dx if logits.data.ndim == 2 else dx[0]

    else:
        pc = np.clip(p, CLAMP_MIN, CLAMP_MAX)
        out = tape.wrap(float(-(y * np.log(pc)).sum() / B))
        inside = (p >= CLAMP_MIN) & (p <= CLAMP_MAX)

        def back():
            dp = np.where(inside, -y / pc, 0.0) * (out.grad / B)
            y_pred.grad += dp if y_pred.data.ndim == 2 else dp[0]

    tape.record(back)
    return out


def source_cross_entropy(y_true, y_pred: Tensor) -> Tensor:
    """Mean cross-entropy of labeled source predictions. y_true is constant
    (one-hot rows); gradient flows only into y_pred."""
    return _cross_entropy("source_cross_entropy", _as_const(y_true), y_pred)


def bootstrap_loss(z_tilde, y_pred: Tensor) -> Tensor:
    """Cross-entropy against the ensemble's one-hot targets. z_tilde is
    stop-gradient by construction: it enters as data, never as a tape op."""
    return _cross_entropy("bootstrap_loss", _as_const(z_tilde), y_pred)


def entropy_min_loss(y_pred: Tensor) -> Tensor:
    """Mean Shannon entropy of prediction rows (natural log)."""
    p = y_pred.data if y_pred.data.ndim == 2 else y_pred.data[None, :]
    if p.ndim != 2:
        raise ShapeError(f"entropy_min_loss: expected [B, C], got shape {y_pred.data.shape}")
    B = p.shape[0]
    logits = y_pred.softmax_logits
    tape = y_pred.tape
    if logits is not None:
        x = logits.data if logits.data.ndim == 2 else logits.data[None, :]
        s = _log_softmax(x)
        row_h = -(p * s).sum(axis=1)
        out = tape.wrap(float(row_h.mean()))

        def back():
            dx = -p * (s + row_h[:, None]) * (out.grad / B)
            logits.grad += dx if logits.data.ndim == 2 else dx[0]

    else:
        if p.min() < 0.0 or np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
            raise NumericalError("entropy_min_loss: rows must be probability distributions")
        pc = np.clip(p, CLAMP_MIN, CLAMP_MAX)
        logp = np.log(pc)
        out = tape.wrap(float(-(p * logp).sum() / B))
        inside = (p >= CLAMP_MIN) & (p <= CLAMP_MAX)

        def back():
            dp = -(logp + np.where(inside, 1.0, 0.0)) * (out.grad / B)
            y_pred.grad += dp if y_pred.data.ndim == 2 else dp[0]

    tape.record(back)
    return out


def symmetric_kl(p: Tensor, q: Tensor) -> Tensor:
    """KL(p || q) + KL(q || p) for strictly positive vectors summing to 1."""
    if p.data.ndim != 1 or q.data.ndim != 1 or p.data.shape != q.data.shape:
        raise ShapeError(f"symmetric_kl: shapes {p.data.shape} and {q.data.shape} must be equal vectors")
    if p.data.min() <= 0.0 or q.data.min() <= 0.0:
        raise NumericalError("symmetric_kl: entries must be strictly positive")
    if abs(p.data.sum() - 1.0) > 1e-6 or abs(q.data.sum() - 1.0) > 1e-6:
        raise NumericalError("symmetric_kl: inputs must sum to 1 (L1-normalize first)")
    tape = p.tape
    ratio = np.log(p.data / q.data)
    out = tape.wrap(float((p.data * ratio).sum() + (q.data * -ratio).sum()))

    def back():
        g = out.grad
        p.grad += g * (ratio + 1.0 - q.data / p.data)
        q.grad += g * (-ratio + 1.0 - p.data / q.data)

    tape.record(back)
    return out


def feature_adaptation_loss(xi_s: Tensor, xi_t: Tensor, eps: float = 1e-6) -> Tensor:
    """Symmetric KL between the L1-normalized mean feature vectors of the
    source and target minibatches (computed on the same post-dropout features
    the classifier consumes)."""
    g_s = l1_normalize(batch_mean(xi_s), eps)
    g_t = l1_normalize(batch_mean(xi_t), eps)
    return symmetric_kl(g_s, g_t)


def median_heuristic_sigma(xs: np.ndarray, xt: np.ndarray) -> float:
    """Median pairwise Euclidean distance over the pooled rows (1.0 when the
    median degenerates to 0)."""
    pooled = np.vstack([np.asarray(xs, dtype=np.float64), np.asarray(xt, dtype=np.float64)])
    sq = (pooled * pooled).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * pooled @ pooled.T, 0.0)
    iu = np.triu_indices(pooled.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return med if med > 0.0 else 1.0


def mmd_rbf(xs: Tensor, xt: Tensor, sigma: float) -> Tensor:
    """Biased-estimator squared MMD with a Gaussian RBF kernel:

        mean k(s, s') + mean k(t, t') - 2 mean k(s, t),
        k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
    """
    if xs.data.ndim != 2 or xt.data.ndim != 2 or xs.data.shape[1] != xt.data.shape[1]:
        raise ShapeError(f"mmd_rbf: incompatible shapes {xs.data.shape} and {xt.data.shape}")
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise NumericalError(f"mmd_rbf: sigma must be positive, got {sigma}")
    X, Y = xs.data, xt.data
    m, n = X.shape[0], Y.shape[0]
    c = 1.0 / (sigma * sigma)

    def kernel(A, B):
        a2 = (A * A).sum(axis=1)[:, None]
        b2 = (B * B).sum(axis=1)[None, :]
        d2 = np.maximum(a2 + b2 - 2.0 * A @ B.T, 0.0)
        return np.exp(-0.5 * c * d2)

    K_ss = kernel(X, X)
    K_tt = kernel(Y, Y)
    K_st = kernel(X, Y)
    tape = xs.tape
    out = tape.wrap(float(K_ss.mean() + K_tt.mean() - 2.0 * K_st.mean()))

    def back():
        g = float(out.grad)
        # d mean K_ss / dX_i = (2c/m^2) * sum_j k_ij (x_j - x_i)
        xs.grad += g * (2.0 * c / (m * m)) * (K_ss @ X - K_ss.sum(axis=1)[:, None] * X)
        xt.grad += g * (2.0 * c / (n * n)) * (K_tt @ Y - K_tt.sum(axis=1)[:, None] * Y)
        # -2 mean K_st couples both sides
        xs.grad += g * (-2.0 * c / (m * n)) * (K_st @ Y - K_st.sum(axis=1)[:, None] * X)
        xt.grad += g * (-2.0 * c / (m * n)) * (K_st.T @ X - K_st.sum(axis=0)[:, None] * Y)

    tape.record(back)
    return out


def rampup_weight(t: int, t_max: int, lambda3: float) -> float:
    """w(t) = exp(-5 (1 - t/t_max)^2) * lambda3 for epoch t in [1, t_max].

    Exactly lambda3 at t = t_max; approaches lambda3 * e^-5 as t/t_max -> 0.
    """
    if t_max < 1 or not (1 <= t <= t_max):
        raise ConfigError(f"rampup_weight: need 1 <= t <= t_max, got t={t}, t_max={t_max}")
    if not (math.isfinite(lambda3) and lambda3 >= 0.0):
        raise ConfigError(f"rampup_weight: lambda3 must be finite and >= 0, got {lambda3}")
    ratio = 1.0 - t / t_max
    return math.exp(-5.0 * ratio * ratio) * lambda3


def total_loss(L: float, J: float, Gamma: float, Omega: float, weights: LossWeights, w_t: float) -> LossBreakdown:
    """Compose the scalar components; raises naming any non-finite one."""
    parts = {"L": L, "J": J, "Gamma": Gamma, "Omega": Omega, "w_t": w_t}
    for name, v in parts.items():
        if not math.isfinite(v):
            raise NumericalError(f"total_loss: component {name} is not finite ({v!r})")
    total = ((L + weights.lambda1 * J) + weights.lambda2 * Gamma) + w_t * Omega
    return LossBreakdown(L=L, J=J, Gamma=Gamma, Omega=Omega, w_t=w_t, total=total)


def compose_total(
    L: Tensor,
    J: Tensor | None,
    Gamma: Tensor | None,
    Omega: Tensor | None,
    weights: LossWeights,
    w_t: float,
) -> Tensor:
    """Tape-side composition, term by term in the same order as total_loss so
    the scalar value matches the logged breakdown bit for bit (skipped terms
    contribute exactly 0.0 there)."""
    out = L
    if J is not None:
        out = add(out, scale(J, weights.lambda1))
    if Gamma is not None:
        out = add(out, scale(Gamma, weights.lambda2))
    if Omega is not None:
        out = add(out, scale(Omega, w_t))
    return out
