"""Evaluation statistics: regression fit, ROC/AUC, classification report,
paired t-test and DeLong's test for correlated AUCs."""
from __future__ import annotations

import csv
import math

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from ._validation import check_binary_labels, check_same_length


def regression_report(pred, truth):
    """MAE, MSE, RMSE and R^2 of ``pred`` against ``truth``.

    R^2 is 1 - SS_res/SS_tot. When ``truth`` is constant it is 1.0 for a
    perfect fit and ``-inf`` (reported as undefined) otherwise.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    check_same_length(pred, truth, ("pred", "truth"))
    err = pred - truth
    mse = float(np.mean(err**2))
    ss_res = float(np.sum(err**2))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0:
        r2 = 1.0 if ss_res == 0 else -math.inf
    else:
        r2 = 1.0 - ss_res / ss_tot
    return {"MAE": float(np.mean(np.abs(err))), "MSE": mse, "RMSE": math.sqrt(mse), "R2": r2}


def format_value(v):
    if isinstance(v, float) and math.isinf(v) and v < 0:
        return "undefined"
    return repr(float(v))


def _check_two_class(labels):
    labels = check_binary_labels(labels, "labels")
    if labels.min() == labels.max():
        raise ValueError("labels must contain both classes")
    return labels


def midrank(x):
    """Average ranks (1-based) with ties sharing their mean rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    z = x[order]
    n = len(x)
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and z[j] == z[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1.0
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def roc_curve(scores, labels):
    """ROC points (fpr, tpr, thresholds), one point per distinct score.

    Starts at (0, 0) with an infinite threshold and ends at (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = _check_two_class(labels)
    check_same_length(scores, labels, ("scores", "labels"))
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    tpr = np.r_[0.0, tps / y.sum()]
    fpr = np.r_[0.0, fps / (len(y) - y.sum())]
    thresholds = np.r_[np.inf, s[distinct]]
    return fpr, tpr, thresholds


def roc_auc(scores, labels):
    """ROC curve points and the Mann-Whitney AUC (ties count one half)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = _check_two_class(labels)
    check_same_length(scores, labels, ("scores", "labels"))
    curve = roc_curve(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    ranks = midrank(scores)
    auc = (ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return curve, float(auc)


def trapezoid_area(fpr, tpr):
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def classification_report(pred_labels, labels):
    pred = check_binary_labels(pred_labels, "pred_labels")
    y = check_binary_labels(labels, "labels")
    check_same_length(pred, y, ("pred_labels", "labels"))
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": float(np.mean(pred == y)),
        "precision": float(precision),
        "recall": float(recall),
        "F1": float(f1),
    }


def student_t_sf(t, df):
    """Upper tail P(T > t) of Student's t, by quadrature of the density."""
    if df <= 0:
        raise ValueError("df must be positive")
    log_norm = gammaln((df + 1) / 2.0) - gammaln(df / 2.0) - 0.5 * math.log(df * math.pi)

    def pdf(x):
        return math.exp(log_norm - (df + 1) / 2.0 * math.log1p(x * x / df))

    if t < 0:
        return 1.0 - student_t_sf(-t, df)
    tail, _ = integrate.quad(pdf, t, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return min(max(tail, 0.0), 1.0)


def paired_t_test(a, b):
    """Paired two-sided t-test on ``a - b`` with n - 1 degrees of freedom.

    All-zero differences give t = 0, p = 1. Constant non-zero differences
    give an infinite statistic and p = 0.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise ValueError("a and b must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        if mean == 0:
            return {"t": 0.0, "p": 1.0, "df": n - 1}
        return {"t": math.copysign(math.inf, mean), "p": 0.0, "df": n - 1}
    t = mean / (sd / math.sqrt(n))
    p = min(1.0, 2.0 * student_t_sf(abs(t), n - 1))
    return {"t": float(t), "p": float(p), "df": n - 1}


def _delong_components(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    m, n = len(pos), len(neg)
    tx = midrank(pos)
    ty = midrank(neg)
    tz = midrank(np.concatenate([pos, neg]))
    auc = (tz[:m].sum() - m * (m + 1) / 2.0) / (m * n)
    v10 = (tz[:m] - tx) / n
    v01 = 1.0 - (tz[m:] - ty) / m
    return auc, v10, v01


def delong_test(scores_a, scores_b, labels):
    """DeLong's test for two correlated AUCs measured on the same samples.

    Returns the two AUCs, the z statistic and a two-sided normal p-value.
    """
    a = np.asarray(scores_a, dtype=np.float64).ravel()
    b = np.asarray(scores_b, dtype=np.float64).ravel()
    labels = _check_two_class(labels)
    check_same_length(a, labels, ("scores_a", "labels"))
    check_same_length(b, labels, ("scores_b", "labels"))
    auc_a, v10a, v01a = _delong_components(a, labels)
    auc_b, v10b, v01b = _delong_components(b, labels)
    m, n = len(v10a), len(v01a)
    s10 = np.cov(np.vstack([v10a, v10b])) if m > 1 else np.zeros((2, 2))
    s01 = np.cov(np.vstack([v01a, v01b])) if n > 1 else np.zeros((2, 2))
    cov = s10 / m + s01 / n
    var = cov[0, 0] + cov[1, 1] - 2 * cov[0, 1]
    diff = auc_a - auc_b
    if var <= 1e-300:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        p = 1.0 if diff == 0 else 0.0
    else:
        z = diff / math.sqrt(var)
        p = math.erfc(abs(z) / math.sqrt(2.0))
    return {"auc_a": float(auc_a), "auc_b": float(auc_b), "z": float(z), "p": float(p)}


def write_metrics_csv(path, rows):
    """Write ``(metric, channel, value)`` triples with a header line."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["metric", "channel", "value"])
        for metric, channel, value in rows:
            w.writerow([metric, channel, format_value(value)])


def summarize(report, title=None):
    """One-line-per-metric human readable summary."""
    lines = [title] if title else []
    width = max(len(k) for k in report)
    for k, v in report.items():
        shown = "undefined" if isinstance(v, float) and math.isinf(v) and v < 0 else f"{v:.6g}"
        lines.append(f"  {k:<{width}}  {shown}")
    return "\n".join(lines)
