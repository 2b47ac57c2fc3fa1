"""Classification metrics and paired model-comparison statistics.

Per-class metrics come from a one-vs-rest collapse of the 3x3 confusion
matrix. F1 and DCI are computed from the same integer formula
2*TP / (2*TP + FP + FN) (they are algebraically identical), so the pair is
bit-equal by construction. The t and chi-square p-values use in-house
regularized incomplete beta/gamma routines (Lentz continued fractions),
accurate to well below 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

NUM_CLASSES = 3


# ---------------------------------------------------------------------------
# special functions


_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gammaln(x: float) -> float:
    """Log-gamma via the Lanczos approximation (x > 0)."""
    if x < 0.5:
        # reflection keeps small arguments accurate
        return math.log(math.pi / math.sin(math.pi * x)) - gammaln(1.0 - x)
    x -= 1.0
    a = _LANCZOS[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, len(_LANCZOS)):
        a += _LANCZOS[i] / (x + i)
    return 0.5 * math.log(2.0 * math.pi) + (x + 0.5) * math.log(t) - t + math.log(a)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        gammaln(a + b) - gammaln(a) - gammaln(b) + a * math.log(x) + b * math.log(1.0 - x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def gammainc_upper_reg(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0."""
    if x < 0.0 or a <= 0.0:
        raise ValueError("gammainc_upper_reg needs a > 0, x >= 0")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        # series for P(a, x), then complement
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(500):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        p = total * math.exp(-x + a * math.log(x) - gammaln(a))
        return 1.0 - p
    # continued fraction for Q(a, x) (modified Lentz)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h * math.exp(-x + a * math.log(x) - gammaln(a))


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t."""
    if df < 1:
        raise ValueError("df must be >= 1")
    x = df / (df + t * t)
    return betainc_reg(df / 2.0, 0.5, x)


def chi2_sf(x: float, df: int) -> float:
    """Survival function of the chi-square distribution."""
    if df < 1:
        raise ValueError("df must be >= 1")
    return gammainc_upper_reg(df / 2.0, x / 2.0)


# ---------------------------------------------------------------------------
# confusion matrix and metrics


def confusion_matrix(y_true, y_pred, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Rows are true classes, columns predicted."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("label vectors differ in length")
    if y_true.size and (y_true.min() < 0 or y_true.max() >= num_classes
                        or y_pred.min() < 0 or y_pred.max() >= num_classes):
        raise ValueError("labels outside class range")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass
class MetricsReport:
    accuracy: float
    per_class: list          # dicts with tp/tn/fp/fn and the derived metrics
    macro: dict
    zero_division: list = field(default_factory=list)  # (class, metric) pairs hit by 0/0

    def to_json(self) -> dict:
        return asdict(self)


def metrics(cm: np.ndarray) -> MetricsReport:
    cm = np.asarray(cm)
    if cm.shape != (NUM_CLASSES, NUM_CLASSES):
        raise ValueError(f"expected a 3x3 confusion matrix, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix counts must be non-negative")
    total = int(cm.sum())
    accuracy = float(np.trace(cm) / total) if total else 0.0
    per_class = []
    flags: list = []

    def safe(num: float, den: float, cls: int, name: str) -> float:
        if den == 0:
            flags.append((cls, name))
            return 0.0
        return num / den

    for c in range(NUM_CLASSES):
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum() - tp)
        fn = int(cm[c, :].sum() - tp)
        tn = total - tp - fp - fn
        precision = safe(tp, tp + fp, c, "precision")
        recall = safe(tp, tp + fn, c, "recall")
        # single shared formula keeps f1 and dci bit-equal
        f1 = safe(2.0 * tp, 2.0 * tp + fp + fn, c, "f1")
        dci = f1
        per_class.append(
            {
                "class": c,
                "tp": tp,
                "tn": tn,
                "fp": fp,
                "fn": fn,
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "dci": dci,
                "ovr_accuracy": safe(tp + tn, total, c, "ovr_accuracy"),
            }
        )
    macro = {
        key: float(np.mean([pc[key] for pc in per_class]))
        for key in ("precision", "recall", "f1", "dci")
    }
    return MetricsReport(accuracy=accuracy, per_class=per_class, macro=macro, zero_division=flags)


# ---------------------------------------------------------------------------
# paired statistics


def _paired_diffs(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired score vectors must be 1-D and equal length")
    if a.size < 2:
        raise ValueError("need at least 2 paired scores")
    d = a - b
    if float(d.std(ddof=1)) == 0.0:
        raise ValueError("degenerate differences: zero variance")
    return d


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test; returns (t, p)."""
    d = _paired_diffs(a, b)
    n = d.size
    t = float(d.mean() / (d.std(ddof=1) / math.sqrt(n)))
    return t, student_t_sf2(t, n - 1)


def cohens_d_paired(a, b) -> float:
    """Paired effect size d_z = mean(diff)/sd(diff), so t = d*sqrt(n)."""
    d = _paired_diffs(a, b)
    return float(d.mean() / d.std(ddof=1))


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def friedman_test(scores) -> tuple[float, float]:
    """Friedman rank test over a (k models x n folds) score table."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("scores must be a (k models x n folds) table")
    k, n = scores.shape
    if k < 2 or n < 2:
        raise ValueError("need k >= 2 models and n >= 2 folds")
    rank_sums = np.zeros(k)
    for j in range(n):
        rank_sums += _average_ranks(scores[:, j])
    chi2 = 12.0 / (n * k * (k + 1)) * float((rank_sums**2).sum()) - 3.0 * n * (k + 1)
    return chi2, chi2_sf(chi2, k - 1)


@dataclass
class StatReport:
    t: float
    p_t: float
    cohens_d: float
    friedman_chi2: float
    p_friedman: float
    n: int
    k: int

    def to_json(self) -> dict:
        return asdict(self)


def compare_models(baseline, others: dict) -> dict:
    """Pairwise t / Cohen's d of ``baseline`` vs each series, plus one Friedman
    test over all series together. Returns a JSON-ready dict."""
    baseline = np.asarray(baseline, dtype=np.float64)
    table = [baseline] + [np.asarray(v, dtype=np.float64) for v in others.values()]
    chi2, p_f = friedman_test(np.stack(table))
    out = {"friedman_chi2": chi2, "p_friedman": p_f, "n": int(baseline.size),
           "k": len(table), "pairwise": {}}
    for name, series in others.items():
        t, p = paired_t_test(baseline, series)
        out["pairwise"][name] = {"t": t, "p": p, "cohens_d": cohens_d_paired(baseline, series)}
    return out


# ---------------------------------------------------------------------------
# text rendering


def _render_table(headers: list, rows: list) -> str:
    cols = [[str(h)] for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            cols[i].append(str(cell))
    widths = [max(len(c) for c in col) for col in cols]
    lines = []
    for r in range(len(rows) + 1):
        line = " | ".join(cols[i][r].ljust(widths[i]) for i in range(len(cols)))
        lines.append(line.rstrip())
        if r == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def render_metrics_table(named_reports: dict, decimals: int = 3) -> str:
    """One row per model: Accuracy / Precision / Recall / F1 (macro)."""
    rows = []
    for name, rep in named_reports.items():
        rows.append(
            [
                name,
                f"{rep.accuracy:.{decimals}f}",
                f"{rep.macro['precision']:.{decimals}f}",
                f"{rep.macro['recall']:.{decimals}f}",
                f"{rep.macro['f1']:.{decimals}f}",
            ]
        )
    return _render_table(["Model", "Accuracy", "Precision", "Recall", "F1-Score"], rows)


def render_comparison_table(cmp: dict) -> str:
    """Rows: paired t-test, Cohen's d, Friedman; one column per comparison."""
    names = list(cmp["pairwise"])
    headers = ["Test"] + names
    t_row = ["Paired t-test (t, p-value)"] + [
        f"({cmp['pairwise'][n]['t']:.2f}, {cmp['pairwise'][n]['p']:.4f})" for n in names
    ]
    d_row = ["Cohen's d"] + [f"{cmp['pairwise'][n]['cohens_d']:.2f}" for n in names]
    f_row = ["Friedman test (chi2, p-value)"] + [
        f"({cmp['friedman_chi2']:.2f}, {cmp['p_friedman']:.4f})" for _ in names
    ]
    return _render_table(headers, [t_row, d_row, f_row])
