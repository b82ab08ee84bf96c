"""Detection metrics, train/test splitting and method comparison reports.

Labels follow the detector's convention: +1 is normal traffic, -1 is an
attack window, and the "negative" class is the attack class.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TypeVar

import numpy as np
from rich.table import Table

from config import RunConfig, TRAIN_FRACTION, SEED
from errors import ConfigError, ConvergenceError, DataError, MetricUndefinedError
from features import FeatureVector, feature_matrix
from kernels import rbf_matrix
from mkl import SelectionRow, fit_standardization, predict_many, select_model, train
from svm import solve_dual

logger = logging.getLogger(__name__)

T = TypeVar("T")
Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int  # normal marked normal
    fp: int  # normal marked attack
    tn: int  # attack marked attack
    fn: int  # attack marked normal

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predicted, truth) -> ConfusionCounts:
    p = np.asarray(predicted, dtype=int).ravel()
    t = np.asarray(truth, dtype=int).ravel()
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions for {t.size} labels")
    if p.size == 0:
        raise ValueError("cannot tabulate an empty prediction")
    if not (np.isin(p, (1, -1)).all() and np.isin(t, (1, -1)).all()):
        raise ValueError("predictions and labels must be +1 or -1")
    return ConfusionCounts(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 1) & (p == -1))),
        tn=int(np.sum((t == -1) & (p == -1))),
        fn=int(np.sum((t == -1) & (p == 1))),
    )


def dr(c: ConfusionCounts) -> float:
    """Detection rate TN / (TN + FN)."""
    if c.tn + c.fn == 0:
        raise MetricUndefinedError("detection rate is undefined without attack samples")
    return c.tn / (c.tn + c.fn)


def er(c: ConfusionCounts) -> float:
    """Error rate (FN + FP) / total."""
    if c.total == 0:
        raise MetricUndefinedError("error rate is undefined for zero samples")
    return (c.fn + c.fp) / c.total


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise MetricUndefinedError("accuracy is undefined for zero samples")
    return (c.tp + c.tn) / c.total


# ── Splitting ─────────────────────────────────────────────────


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _train_counts(class_sizes: dict[int, int], fraction: float) -> dict[int, int]:
    """Per-class train sizes summing to round(fraction * N), each in [1, n_c - 1]."""
    total = sum(class_sizes.values())
    exact = {c: fraction * n for c, n in class_sizes.items()}
    counts = {c: _round_half_up(x) for c, x in exact.items()}
    target = _round_half_up(fraction * total)

    # nudge the classes whose rounding moved furthest from the exact share
    while sum(counts.values()) > target:
        c = max(counts, key=lambda k: (counts[k] - exact[k], -k))
        counts[c] -= 1
    while sum(counts.values()) < target:
        c = max(counts, key=lambda k: (exact[k] - counts[k], -k))
        counts[c] += 1
    return {c: min(max(k, 1), class_sizes[c] - 1) for c, k in counts.items()}


def split(
    samples: Sequence[T], train_fraction: float = TRAIN_FRACTION, seed: int = SEED,
) -> tuple[list[T], list[T]]:
    """Stratified train/test split.  Both halves keep the original sample order."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train fraction must be in (0, 1), got {train_fraction}")
    labels = [getattr(s, "label", None) for s in samples]
    if any(lab not in (1, -1) for lab in labels):
        raise DataError("every sample needs a +1/-1 label to be split")
    by_class = {c: [k for k, lab in enumerate(labels) if lab == c] for c in (1, -1)}
    for c, idx in by_class.items():
        if len(idx) < 2:
            raise DataError(f"need at least 2 samples of class {c:+d} to split, got {len(idx)}")

    counts = _train_counts({c: len(idx) for c, idx in by_class.items()}, train_fraction)
    rng = np.random.Generator(np.random.PCG64(seed))
    train_idx: set[int] = set()
    for c in (1, -1):
        idx = np.array(by_class[c])
        chosen = rng.permutation(idx)[: counts[c]]
        train_idx.update(int(k) for k in chosen)

    train_part = [s for k, s in enumerate(samples) if k in train_idx]
    test_part = [s for k, s in enumerate(samples) if k not in train_idx]
    logger.debug("split %d samples into %d train / %d test", len(samples), len(train_part), len(test_part))
    return train_part, test_part


# ── Methods ───────────────────────────────────────────────────


@dataclass
class FittedMethod:
    predict: Predictor
    selection: list[SelectionRow] = field(default_factory=list)
    detail: str = ""


def _fit_svm(X, y, rc: RunConfig, X_test=None, y_test=None) -> FittedMethod:
    """Single full-vector RBF kernel; the bandwidth is picked on an inner validation split."""
    mean, std = fit_standardization(X)
    Z = (X - mean) / std

    rows = [_Row(k, int(lab)) for k, lab in enumerate(y)]
    inner_train, inner_val = split(rows, rc.train_fraction, rc.seed)
    tr = np.array([r.index for r in inner_train])
    va = np.array([r.index for r in inner_val])

    best_gamma, best_acc = None, -1.0
    for gamma in rc.bandwidths:
        try:
            sol = solve_dual(rbf_matrix(Z[tr], Z[tr], gamma), y[tr], C=rc.svm_c, tol=rc.svm_tol)
        except ConvergenceError as e:
            logger.warning("single-kernel SVM, gamma=%g: %s", gamma, e)
            continue
        f = rbf_matrix(Z[va], Z[tr], gamma) @ (sol.alpha * y[tr]) + sol.b
        acc = float(np.mean(_flags(f, rc.zero_decision) == y[va]))
        logger.debug("single-kernel SVM, gamma=%g: validation accuracy %.4f", gamma, acc)
        if acc > best_acc:
            best_gamma, best_acc = gamma, acc
    if best_gamma is None:
        raise ConvergenceError("single-kernel SVM failed to converge for every bandwidth")

    sol = solve_dual(rbf_matrix(Z, Z, best_gamma), y, C=rc.svm_c, tol=rc.svm_tol)
    coef = sol.alpha * y

    def predict(Q: np.ndarray) -> np.ndarray:
        f = rbf_matrix((Q - mean) / std, Z, best_gamma) @ coef + sol.b
        return _flags(f, rc.zero_decision)

    return FittedMethod(predict, detail=f"gamma={best_gamma:g}")


@dataclass(frozen=True)
class _Row:
    index: int
    label: int


def _flags(f: np.ndarray, zero_decision: int) -> np.ndarray:
    flags = np.sign(f).astype(int)
    flags[flags == 0] = zero_decision
    return flags


def _fit_fixed(family: str, regularizer: str) -> Callable[..., FittedMethod]:
    def fit(X, y, rc: RunConfig, X_test=None, y_test=None) -> FittedMethod:
        model = train(X, y, rc.mkl_config(family, regularizer))
        weights = ", ".join(f"{w:.3f}" for w in model.d)
        return FittedMethod(lambda Q: predict_many(model, Q), detail=f"d=[{weights}]")

    return fit


def _fit_rgmkl(X, y, rc: RunConfig, X_test=None, y_test=None) -> FittedMethod:
    model, report = select_model(X, y, rc.mkl_candidates(), X_test, y_test)
    return FittedMethod(
        lambda Q: predict_many(model, Q), selection=report, detail=model.config.label
    )


METHODS: dict[str, tuple[str, Callable[..., FittedMethod]]] = {
    "svm": ("SVM", _fit_svm),
    "smkl": ("Simple MKL", _fit_fixed("sum", "l1")),
    "gmkl": ("GMKL", _fit_fixed("product", "l2")),
    "rgmkl": ("R-GMKL", _fit_rgmkl),
}


@dataclass
class MethodResult:
    method: str
    title: str
    counts: ConfusionCounts
    dr: float
    er: float
    accuracy: float
    detail: str = ""
    selection: list[SelectionRow] = field(default_factory=list, repr=False)


def compare(
    methods: Sequence[str],
    train_set: Sequence[FeatureVector],
    test_set: Sequence[FeatureVector],
    rc: RunConfig | None = None,
) -> list[MethodResult]:
    """Train each named method on the same split and score it on the test windows."""
    rc = rc or RunConfig()
    if not methods:
        raise ConfigError("no methods to compare")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown comparison methods: {unknown}")

    X, y = feature_matrix(train_set, rc.features)
    X_test, y_test = feature_matrix(test_set, rc.features)
    if y is None or y_test is None:
        raise DataError("comparison needs labeled train and test windows")

    results = []
    for name in methods:
        title, fit = METHODS[name]
        fitted = fit(X, y, rc, X_test, y_test)
        counts = confusion(fitted.predict(X_test), y_test)
        result = MethodResult(
            method=name, title=title, counts=counts,
            dr=dr(counts), er=er(counts), accuracy=accuracy(counts),
            detail=fitted.detail, selection=fitted.selection,
        )
        logger.info("%s: DR=%.3f ER=%.3f (%s)", title, result.dr, result.er, fitted.detail)
        results.append(result)
    return results


# ── Reports ───────────────────────────────────────────────────


def write_comparison_csv(results: Sequence[MethodResult], out_path: Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("method", "DR", "ER"))
        for r in results:
            writer.writerow((r.title, f"{r.dr:.6f}", f"{r.er:.6f}"))
    return out_path


def write_selection_csv(report: Sequence[SelectionRow], out_path: Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("group", "family", "regularizer", "R", "accuracy", "error"))
        for row in report:
            writer.writerow((
                row.group, row.family, row.regularizer,
                "" if math.isnan(row.R) else f"{row.R:.6g}",
                "" if math.isnan(row.accuracy) else f"{row.accuracy:.6f}",
                row.error,
            ))
    return out_path


def comparison_table(results: Sequence[MethodResult], title: str = "Attack detection comparison") -> Table:
    table = Table(title=title, title_style="bold yellow", border_style="dim", pad_edge=False)
    table.add_column("Method", style="bold")
    table.add_column("DR (%)", justify="right")
    table.add_column("ER (%)", justify="right")
    table.add_column("Accuracy (%)", justify="right")
    table.add_column("Detail", style="dim")
    for r in results:
        table.add_row(r.title, f"{100 * r.dr:.1f}", f"{100 * r.er:.1f}", f"{100 * r.accuracy:.1f}", r.detail)
    return table


def selection_table(report: Sequence[SelectionRow], selected: int | None = None) -> Table:
    table = Table(title="Kernel selection", title_style="bold yellow", border_style="dim", pad_edge=False)
    table.add_column("#", justify="right")
    table.add_column("Family")
    table.add_column("Reg.")
    table.add_column("R", justify="right")
    table.add_column("Accuracy (%)", justify="right")
    for row in report:
        style = "bold green" if row.group == selected else None
        table.add_row(
            str(row.group), row.family, row.regularizer,
            "n/a" if math.isnan(row.R) else f"{row.R:.4g}",
            "n/a" if math.isnan(row.accuracy) else f"{100 * row.accuracy:.1f}",
            style=style,
        )
    return table


def selected_group(report: Sequence[SelectionRow]) -> int | None:
    """Group number of the smallest defined R, matching select_model's choice."""
    scored = [(row.R, row.group) for row in report if not math.isnan(row.R) and not row.error]
    if len(report) == 1:
        return report[0].group
    return min(scored)[1] if scored else None
