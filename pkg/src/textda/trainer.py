"""Joint training loop.

Every iteration draws a labeled source batch, a target batch, and a batch of
the union of all N training documents, then minimizes

    total = L + lambda1 * J + lambda2 * Gamma + w_t * Omega

with RMSProp. Components whose effective weight is zero are never computed
(their logged value is exactly 0.0), which also makes a DAS run with all
lambdas zero bitwise identical to the NaiveNN variant under the same seed.
After each epoch the model is scored on the dev set (eval mode), then the
self-ensemble is refreshed; the returned parameters are those of the
minimum-dev-error epoch (earliest on ties).
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .config import TrainConfig
from .data import (
    PAD_INDEX,
    Corpus,
    Vocab,
    BatchStream,
    load_pretrained_embeddings,
    pad_batch,
    split_dev,
)
from .ensemble import EnsembleState, predict_all
from .errors import ConfigError, NumericalError
from .losses import (
    LossBreakdown,
    bootstrap_loss,
    compose_total,
    entropy_min_loss,
    feature_adaptation_loss,
    median_heuristic_sigma,
    mmd_rbf,
    rampup_weight,
    source_cross_entropy,
    total_loss,
)
from .model import ModelParams, apply_max_norm, classify, encode_batch, init_params
from .rng import named_rng

__all__ = [
    "DIVERGENCE_LIMIT",
    "EpochMetrics",
    "History",
    "RMSProp",
    "train",
    "select_model",
    "run_multi_seed",
    "RunResult",
    "write_history_csv",
    "parse_history_csv",
    "CSV_COLUMNS",
]

DIVERGENCE_LIMIT = 1e6
N_CLASSES = 3

CSV_COLUMNS = ("epoch", "L", "J", "Gamma", "Omega", "w_t", "total", "dev_error", "seconds")


@dataclass
class EpochMetrics:
    epoch: int
    L: float
    J: float
    Gamma: float
    Omega: float
    w_t: float
    total: float
    dev_error: float
    seconds: float


@dataclass
class History:
    epochs: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0  # 1-based; 0 until training finishes


class RMSProp:
    """s <- rho s + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(s) + eps)."""

    def __init__(self, arrays: dict[str, np.ndarray], lr: float, rho: float = 0.9, eps: float = 1e-8):
        if lr <= 0 or not (0.0 <= rho < 1.0) or eps <= 0:
            raise ConfigError(f"bad RMSProp settings lr={lr}, rho={rho}, eps={eps}")
        self.lr, self.rho, self.eps = lr, rho, eps
        self.s = {name: np.zeros_like(arr) for name, arr in arrays.items()}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, arr in arrays.items():
            g = grads[name]
            s = self.s[name]
            s *= self.rho
            s += (1.0 - self.rho) * g * g
            arr -= self.lr * g / (np.sqrt(s) + self.eps)


def select_model(history: History) -> int:
    """1-based epoch with the minimum dev error; earliest wins ties."""
    if not history.epochs:
        raise ConfigError("select_model: empty history")
    errors = [m.dev_error for m in history.epochs]
    return int(np.argmin(errors)) + 1


def _dev_error(params: ModelParams, enc_dev, dev_labels: np.ndarray, eval_batch: int) -> float:
    probs = predict_all(params, enc_dev, eval_batch)
    preds = probs.argmax(axis=1)
    return float((preds != dev_labels).mean())


def train(
    config: TrainConfig,
    vocab: Vocab,
    embeddings: np.ndarray,
    source: Corpus,
    target: Corpus,
    dev: Corpus,
    source_unlabeled: Corpus | None = None,
    dump_ensemble_dir=None,
) -> tuple[ModelParams, History]:
    """Run the full schedule and return (best-epoch parameters, history).

    `source` must be labeled; `target` and `source_unlabeled` labels are never
    read. The union pool for ensemble bookkeeping is source + target
    (+ source_unlabeled), in that order.
    """
    weights = config.effective_weights()
    cap = config.max_doc_len
    enc_s = [vocab.encode(d.tokens, cap) for d in source]
    enc_t = [vocab.encode(d.tokens, cap) for d in target]
    enc_su = [vocab.encode(d.tokens, cap) for d in (source_unlabeled or [])]
    enc_union = enc_s + enc_t + enc_su
    enc_dev = [vocab.encode(d.tokens, cap) for d in dev]
    dev_labels = dev.label_indices()
    labels_s = source.label_indices()
    onehot_s = np.eye(N_CLASSES, dtype=np.float64)[labels_s]

    params = init_params(embeddings, config.window, config.hidden, N_CLASSES,
                         named_rng(config.seed, "init"))
    optimizer = RMSProp(params.arrays(), config.learning_rate, config.rmsprop_rho, config.rmsprop_eps)
    stream = BatchStream(
        labels_s, n_target=len(enc_t), n_union=len(enc_union),
        batch_size=config.batch_size, balance=config.balance_source,
        rng=named_rng(config.seed, "shuffle"),
    )
    rng_drop = named_rng(config.seed, "dropout")

    need_ensemble = weights.lambda3 > 0.0
    need_target = weights.lambda1 > 0.0 or weights.lambda2 > 0.0
    ensemble = EnsembleState.zeros(len(enc_union), N_CLASSES, config.alpha) if need_ensemble else None
    z_tilde: np.ndarray | None = None
    if need_ensemble and config.bootstrap_from_epoch1:
        z_tilde = ensemble.to_targets()  # degenerate on purpose (ablation switch)

    history = History()
    best_error = np.inf
    best_params = params.copy()

    for t in range(1, config.epochs + 1):
        tick = time.perf_counter()
        w_t = rampup_weight(t, config.epochs, weights.lambda3)
        omega_active = need_ensemble and z_tilde is not None
        sums = {"L": 0.0, "J": 0.0, "Gamma": 0.0, "Omega": 0.0}
        iters = 0

        for triple in stream.epoch():
            tape = Tape()
            leaves = params.leaves(tape)

            mat_s, len_s = pad_batch(enc_s, triple.source_idx)
            enc_bs = encode_batch(tape, leaves, mat_s, len_s,
                                  config.dropout_rate, training=True, rng=rng_drop)
            probs_s = classify(tape, leaves, enc_bs.xi)
            L_t = source_cross_entropy(onehot_s[triple.source_idx], probs_s)

            J_t = Gamma_t = Omega_t = None
            if need_target:
                mat_t, len_t = pad_batch(enc_t, triple.target_idx)
                enc_bt = encode_batch(tape, leaves, mat_t, len_t,
                                      config.dropout_rate, training=True, rng=rng_drop)
                if weights.lambda1 > 0.0:
                    if config.distance_loss == "mmd-rbf":
                        sigma = config.mmd_sigma
                        if sigma is None:
                            sigma = median_heuristic_sigma(enc_bs.xi.data, enc_bt.xi.data)
                        J_t = mmd_rbf(enc_bs.xi, enc_bt.xi, sigma)
                    else:
                        J_t = feature_adaptation_loss(enc_bs.xi, enc_bt.xi, config.l1_eps)
                if weights.lambda2 > 0.0:
                    Gamma_t = entropy_min_loss(classify(tape, leaves, enc_bt.xi))
            if omega_active:
                mat_u, len_u = pad_batch(enc_union, triple.union_idx)
                enc_bu = encode_batch(tape, leaves, mat_u, len_u,
                                      config.dropout_rate, training=True, rng=rng_drop)
                probs_u = classify(tape, leaves, enc_bu.xi)
                Omega_t = bootstrap_loss(z_tilde[triple.union_idx], probs_u)

            total_t = compose_total(L_t, J_t, Gamma_t, Omega_t, weights, w_t)
            step = total_loss(
                float(L_t.data),
                float(J_t.data) if J_t is not None else 0.0,
                float(Gamma_t.data) if Gamma_t is not None else 0.0,
                float(Omega_t.data) if Omega_t is not None else 0.0,
                weights, w_t,
            )
            for name, value in (("L", step.L), ("J", step.J), ("Gamma", step.Gamma),
                                ("Omega", step.Omega), ("total", step.total)):
                if abs(value) > DIVERGENCE_LIMIT:
                    raise NumericalError(
                        f"training diverged at epoch {t}, iteration {iters + 1}: "
                        f"{name} = {value:.6e} exceeds {DIVERGENCE_LIMIT:.0e}"
                    )

            tape.backward(total_t)
            grads = {name: leaf.grad for name, leaf in leaves.items()}
            grads["E"][PAD_INDEX] = 0.0  # padding embedding stays frozen
            optimizer.step(params.arrays(), grads)
            apply_max_norm(params.F_w, config.max_norm)

            sums["L"] += step.L
            sums["J"] += step.J
            sums["Gamma"] += step.Gamma
            sums["Omega"] += step.Omega
            iters += 1

        means = {k: v / iters for k, v in sums.items()}
        epoch_row = total_loss(means["L"], means["J"], means["Gamma"], means["Omega"], weights, w_t)

        dev_error = _dev_error(params, enc_dev, dev_labels, config.eval_batch)
        if dev_error < best_error:
            best_error = dev_error
            best_params = params.copy()

        if need_ensemble:
            fresh = predict_all(params, enc_union, config.eval_batch)
            ensemble.update(fresh)
            z_tilde = ensemble.to_targets()
            if dump_ensemble_dir is not None:
                np.save(Path(dump_ensemble_dir) / f"ensemble_epoch{t:03d}.npy", ensemble.Z)

        history.epochs.append(EpochMetrics(
            epoch=t, L=epoch_row.L, J=epoch_row.J, Gamma=epoch_row.Gamma,
            Omega=epoch_row.Omega, w_t=epoch_row.w_t, total=epoch_row.total,
            dev_error=dev_error, seconds=time.perf_counter() - tick,
        ))

    history.best_epoch = select_model(history)
    return best_params, history


def write_history_csv(history: History, path) -> None:
    """Full-precision floats (repr round-trip) so recomposing the total from a
    parsed row reproduces it bit for bit."""
    lines = [",".join(CSV_COLUMNS)]
    for m in history.epochs:
        lines.append(",".join([
            str(m.epoch),
            *(repr(v) for v in (m.L, m.J, m.Gamma, m.Omega, m.w_t, m.total, m.dev_error, m.seconds)),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_history_csv(path) -> History:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != ",".join(CSV_COLUMNS):
        raise ConfigError(f"{path}: unexpected history header")
    history = History()
    for line in lines[1:]:
        parts = line.split(",")
        history.epochs.append(EpochMetrics(
            epoch=int(parts[0]),
            **{name: float(v) for name, v in zip(CSV_COLUMNS[1:], parts[1:])},
        ))
    if history.epochs:
        history.best_epoch = select_model(history)
    return history


@dataclass
class RunResult:
    seed: int
    best_epoch: int
    dev_error: float
    accuracy: float
    macro_f1: float


def run_multi_seed(
    config: TrainConfig,
    source: Corpus,
    target: Corpus,
    test: Corpus,
    n_runs: int,
    embeddings_path=None,
    source_unlabeled: Corpus | None = None,
) -> list[RunResult]:
    """Independent runs with seeds config.seed + 0 .. n_runs - 1, each with
    its own dev split and embedding initialization, evaluated on `test`."""
    from .data import build_vocab
    from .evaluation import evaluate_corpus

    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}")
    pools = [source, target] + ([source_unlabeled] if source_unlabeled else [])
    vocab = build_vocab(pools, config.vocab_size)
    results = []
    for k in range(n_runs):
        cfg = dataclasses.replace(config, seed=config.seed + k)
        train_split, dev = split_dev(source, cfg.n_dev, named_rng(cfg.seed, "split"))
        embeddings, _ = load_pretrained_embeddings(
            embeddings_path, vocab, cfg.embedding_dim, named_rng(cfg.seed, "embeddings"))
        params, history = train(cfg, vocab, embeddings, train_split, target, dev,
                                source_unlabeled=source_unlabeled)
        report = evaluate_corpus(params, vocab, test, cfg.max_doc_len, cfg.eval_batch)
        results.append(RunResult(
            seed=cfg.seed,
            best_epoch=history.best_epoch,
            dev_error=history.epochs[history.best_epoch - 1].dev_error,
            accuracy=report.accuracy,
            macro_f1=report.macro_f1,
        ))
    return results
