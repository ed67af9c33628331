"""Metrics, significance testing, and filter inspection.

Macro-F1 averages per-class F1 over the classes that actually appear in the
gold labels; any 0/0 ratio along the way is defined as 0. The significance
test is a one-tailed unpaired Welch t-test (H1: mean(a) > mean(b)) with
Welch-Satterthwaite degrees of freedom and fixed conventions for
zero-variance samples.

Filter analysis walks every window position of a corpus through the trained
encoder (eval mode) and reports, for the strongest filters of each class, the
trigrams with the highest post-ReLU activation. Padding positions render as
"*"; identical trigrams are deduplicated keeping their maximum activation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import t as _student_t

from .data import LABELS, PAD_INDEX, UNK_INDEX, Corpus, Vocab, pad_batch
from .ensemble import predict_all
from .errors import ConfigError, DataError
from .model import ModelParams, forward_eval

__all__ = [
    "accuracy",
    "confusion_matrix",
    "macro_f1",
    "per_class_f1",
    "EvalReport",
    "evaluate_corpus",
    "TTestResult",
    "ttest_one_tailed",
    "TrigramHit",
    "FilterSummary",
    "FilterReport",
    "top_filters_per_class",
    "filter_analysis",
    "render_filter_report",
]


def _check_label_arrays(golds, preds, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(golds, dtype=np.int64)
    p = np.asarray(preds, dtype=np.int64)
    if g.ndim != 1 or g.shape != p.shape:
        raise ConfigError(f"label arrays must be equal-length vectors, got {g.shape} and {p.shape}")
    if g.size == 0:
        raise ConfigError("cannot score an empty prediction set")
    for name, arr in (("golds", g), ("preds", p)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ConfigError(f"{name} contain a class outside [0, {n_classes})")
    return g, p


def accuracy(golds, preds, n_classes: int = len(LABELS)) -> float:
    g, p = _check_label_arrays(golds, preds, n_classes)
    return float((g == p).mean())


def confusion_matrix(golds, preds, n_classes: int = len(LABELS)) -> np.ndarray:
    """[C, C] counts; rows are gold classes, columns predictions."""
    g, p = _check_label_arrays(golds, preds, n_classes)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (g, p), 1)
    return cm


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def per_class_f1(golds, preds, n_classes: int = len(LABELS)) -> list[dict]:
    cm = confusion_matrix(golds, preds, n_classes)
    out = []
    for c in range(n_classes):
        tp = float(cm[c, c])
        precision = _safe_div(tp, float(cm[:, c].sum()))
        recall = _safe_div(tp, float(cm[c, :].sum()))
        f1 = _safe_div(2.0 * precision * recall, precision + recall)
        out.append({
            "precision": precision, "recall": recall, "f1": f1,
            "support": int(cm[c, :].sum()),
        })
    return out


def macro_f1(golds, preds, n_classes: int = len(LABELS)) -> float:
    """Mean F1 over the classes present in the gold labels."""
    g, p = _check_label_arrays(golds, preds, n_classes)
    stats = per_class_f1(g, p, n_classes)
    present = [c for c in range(n_classes) if stats[c]["support"] > 0]
    return float(np.mean([stats[c]["f1"] for c in present]))


@dataclass
class EvalReport:
    n_docs: int
    accuracy: float
    macro_f1: float
    per_class: dict
    confusion: list

    def to_dict(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class,
            "confusion": self.confusion,
        }

    def summary(self) -> str:
        lines = [
            f"documents  {self.n_docs}",
            f"accuracy   {self.accuracy:.6f}",
            f"macro_f1   {self.macro_f1:.6f}",
        ]
        for label in LABELS:
            st = self.per_class[label]
            lines.append(
                f"  {label:9s} precision {st['precision']:.6f}  recall {st['recall']:.6f}  "
                f"f1 {st['f1']:.6f}  support {st['support']}"
            )
        return "\n".join(lines)


def evaluate_corpus(params: ModelParams, vocab: Vocab, corpus: Corpus,
                    max_doc_len: int, eval_batch: int = 256) -> EvalReport:
    """Eval-mode predictions for a labeled corpus, scored with both metrics."""
    if len(corpus) == 0:
        raise DataError("cannot evaluate an empty corpus")
    golds = corpus.label_indices()
    enc = [vocab.encode(d.tokens, max_doc_len) for d in corpus]
    preds = predict_all(params, enc, eval_batch).argmax(axis=1)
    stats = per_class_f1(golds, preds)
    return EvalReport(
        n_docs=len(corpus),
        accuracy=accuracy(golds, preds),
        macro_f1=macro_f1(golds, preds),
        per_class={label: stats[i] for i, label in enumerate(LABELS)},
        confusion=confusion_matrix(golds, preds).tolist(),
    )


@dataclass
class TTestResult:
    t_stat: float
    dof: float
    p_value: float


def ttest_one_tailed(a, b) -> TTestResult:
    """Welch's unpaired t-test of H1: mean(a) > mean(b).

    Zero-variance conventions: both samples constant with equal means gives
    p = 0.5; constant with unequal means gives p = 0.0 (a above b) or 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size < 2 or b.size < 2:
        raise ConfigError("ttest_one_tailed: each sample needs at least 2 observations")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if ma == mb:
            return TTestResult(t_stat=0.0, dof=float(a.size + b.size - 2), p_value=0.5)
        sign = np.inf if ma > mb else -np.inf
        return TTestResult(t_stat=float(sign), dof=float(a.size + b.size - 2),
                           p_value=0.0 if ma > mb else 1.0)
    sa, sb = va / a.size, vb / b.size
    se2 = sa + sb
    t_stat = (ma - mb) / np.sqrt(se2)
    dof = se2 * se2 / (
        (sa * sa / (a.size - 1) if va > 0 else 0.0)
        + (sb * sb / (b.size - 1) if vb > 0 else 0.0)
    )
    p = float(_student_t.sf(t_stat, dof))
    return TTestResult(t_stat=float(t_stat), dof=float(dof), p_value=p)


@dataclass
class TrigramHit:
    tokens: tuple[str, ...]
    activation: float
    domains: str  # "+"-joined sorted domain tags the trigram occurred in

    def rendered(self) -> str:
        return "-".join(self.tokens)


@dataclass
class FilterSummary:
    index: int
    class_weight: float
    trigrams: list[TrigramHit] = field(default_factory=list)


@dataclass
class FilterReport:
    k_filters: int
    k_trigrams: int
    classes: dict = field(default_factory=dict)  # label -> list[FilterSummary]

    def to_dict(self) -> dict:
        return {
            "k_filters": self.k_filters,
            "k_trigrams": self.k_trigrams,
            "classes": {
                label: [
                    {
                        "filter": fs.index,
                        "class_weight": fs.class_weight,
                        "trigrams": [
                            {
                                "tokens": list(hit.tokens),
                                "rendered": hit.rendered(),
                                "activation": hit.activation,
                                "domains": hit.domains,
                            }
                            for hit in fs.trigrams
                        ],
                    }
                    for fs in summaries
                ]
                for label, summaries in self.classes.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def top_filters_per_class(F_w: np.ndarray, k: int) -> dict[int, list[int]]:
    """Filter indices with the largest output weight per class, descending
    (ties toward the lower index)."""
    if k < 1 or k > F_w.shape[1]:
        raise ConfigError(f"k must be in [1, {F_w.shape[1]}], got {k}")
    out = {}
    for c in range(F_w.shape[0]):
        order = np.argsort(-F_w[c], kind="stable")
        out[c] = [int(j) for j in order[:k]]
    return out


def _token_name(vocab: Vocab, idx: int) -> str:
    if idx == PAD_INDEX:
        return "*"
    if idx == UNK_INDEX:
        return "<unk>"
    return vocab.itos[idx]


def filter_analysis(
    params: ModelParams,
    vocab: Vocab,
    corpora: list[Corpus],
    k_filters: int = 10,
    k_trigrams: int = 5,
    max_doc_len: int = 400,
    eval_batch: int = 256,
) -> FilterReport:
    """Top activating trigrams for each class's strongest filters.

    Deterministic and invariant to document order: hits are deduplicated by
    token triple keeping the maximum activation, and ranked by (activation
    descending, triple ascending).
    """
    per_class = top_filters_per_class(params.F_w, k_filters)
    wanted = sorted({j for filters in per_class.values() for j in filters})
    # token-triple -> (max activation, set of domains) per filter
    best: dict[int, dict[tuple[str, ...], tuple[float, set]]] = {j: {} for j in wanted}

    for corpus in corpora:
        enc = [vocab.encode(d.tokens, max_doc_len) for d in corpus]
        for start in range(0, len(enc), eval_batch):
            idx = np.arange(start, min(start + eval_batch, len(enc)))
            mat, lengths = pad_batch(enc, idx)
            _, details = forward_eval(params, mat, lengths)
            B, P = mat.shape
            H3 = details.H.data.reshape(B, P, params.hidden)
            valid = np.arange(P)[None, :] < lengths[:, None]
            rows, cols = np.nonzero(valid)
            windows = details.idx_win[rows, cols]  # [n_valid, l]
            for j in wanted:
                acts = H3[rows, cols, j]
                table = best[j]
                for win, act in zip(windows, acts):
                    triple = tuple(_token_name(vocab, int(w)) for w in win)
                    got = table.get(triple)
                    if got is None:
                        table[triple] = (float(act), {corpus.domain})
                    else:
                        table[triple] = (max(got[0], float(act)), got[1] | {corpus.domain})

    report = FilterReport(k_filters=k_filters, k_trigrams=k_trigrams)
    for c, label in enumerate(LABELS):
        summaries = []
        for j in per_class[c]:
            ranked = sorted(best[j].items(), key=lambda kv: (-kv[1][0], kv[0]))
            hits = [
                TrigramHit(tokens=triple, activation=act, domains="+".join(sorted(domains)))
                for triple, (act, domains) in ranked[:k_trigrams]
            ]
            summaries.append(FilterSummary(index=j, class_weight=float(params.F_w[c, j]), trigrams=hits))
        report.classes[label] = summaries
    return report


def render_filter_report(report: FilterReport) -> str:
    lines = []
    for label in LABELS:
        if label not in report.classes:
            continue
        lines.append(f"class: {label}")
        for fs in report.classes[label]:
            lines.append(f"  filter {fs.index} (class weight {fs.class_weight:.4f})")
            for hit in fs.trigrams:
                lines.append(f"    {hit.rendered()}  activation {hit.activation:.4f}  [{hit.domains}]")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
