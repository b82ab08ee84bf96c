"""Generalized multiple kernel learning with R-fitness model selection.

Training alternates between the SVM dual (alpha for fixed d) and a projected,
backtracking gradient step on the kernel weights d:

    J(d)      = max_alpha Q(alpha; K_d) + r(d)
    dJ/dd_m   = dr/dd_m - 1/2 beta' (dK_d/dd_m) beta,   beta = alpha * y

L1 keeps d on the probability simplex (r = 0); L2 keeps d >= 0 and adds
r(d) = sigma/2 ||d||^2.
"""

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from config import (
    SIGMA, SVM_C, SVM_TOL, OUTER_MAX_ITER, OUTER_TOL, STEP_INIT, STEP_SHRINK,
    ARMIJO, MIN_STEP, ZERO_DECISION, FEATURES,
)
from errors import ConvergenceError, DataError, DegenerateModelError, FlowGuardError
from kernels import (
    GramSet, KernelConfig, KernelFamily, build_grams, combine, combine_rows, gradient_quadform,
)
from svm import DualSolution, solve_dual

logger = logging.getLogger(__name__)

MODEL_SCHEMA = "flowguard-model/1"


class Regularizer(str, Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class MklConfig:
    kernel: KernelConfig
    regularizer: Regularizer = Regularizer.L1
    sigma: float = SIGMA
    C: float = SVM_C
    svm_tol: float = SVM_TOL
    outer_max_iter: int = OUTER_MAX_ITER
    outer_tol: float = OUTER_TOL
    step_init: float = STEP_INIT
    step_shrink: float = STEP_SHRINK
    armijo: float = ARMIJO
    min_step: float = MIN_STEP
    zero_decision: int = ZERO_DECISION
    features: tuple[str, ...] = FEATURES

    def __post_init__(self):
        object.__setattr__(self, "regularizer", Regularizer(self.regularizer))
        if self.regularizer is Regularizer.L2 and not self.sigma > 0:
            raise ValueError(f"L2 regularization needs sigma > 0, got {self.sigma}")
        if not self.C > 0 or not self.svm_tol > 0 or not self.outer_tol > 0:
            raise ValueError("C, svm_tol and outer_tol must be positive")
        if self.outer_max_iter < 0:
            raise ValueError("outer_max_iter must be >= 0")
        if not 0 < self.step_shrink < 1 or not self.step_init > 0 or not self.min_step > 0:
            raise ValueError("step policy needs step_init > 0, 0 < shrink < 1, min_step > 0")
        if self.zero_decision not in (1, -1):
            raise ValueError(f"zero_decision must be 1 or -1, got {self.zero_decision}")
        if len(self.features) != self.kernel.feature_dim:
            raise ValueError(
                f"{len(self.features)} features but kernel expects {self.kernel.feature_dim}"
            )

    @property
    def label(self) -> str:
        return f"{self.kernel.family.title} / {self.regularizer.value.upper()}"


@dataclass
class MklModel:
    d: np.ndarray
    dual: DualSolution
    X: np.ndarray  # raw (unstandardized) training samples
    y: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    config: MklConfig
    R: float = math.nan
    objective_trace: list[float] = field(default_factory=list)
    stalled: bool = False
    _grams: GramSet | None = field(default=None, repr=False, compare=False)

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    @property
    def grams(self) -> GramSet:
        if self._grams is None:
            self._grams = build_grams(self.standardize(self.X), self.config.kernel)
        return self._grams


# ── Feasible set ──────────────────────────────────────────────


def project_feasible(d, regularizer: Regularizer) -> np.ndarray:
    """Euclidean projection onto the simplex (L1) or the non-negative orthant (L2)."""
    d = np.asarray(d, dtype=float)
    if Regularizer(regularizer) is Regularizer.L2:
        return np.maximum(d, 0.0)
    if d.size == 1:
        return np.ones(1)
    if np.all(d >= 0) and abs(d.sum() - 1.0) <= 1e-12:
        return d.copy()  # already on the simplex
    u = np.sort(d)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, d.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(d - css[rho] / (rho + 1), 0.0)


def _init_weights(size: int, regularizer: Regularizer) -> np.ndarray:
    return np.full(size, 1.0 / size) if regularizer is Regularizer.L1 else np.ones(size)


def _penalty(d: np.ndarray, config: MklConfig) -> float:
    return 0.0 if config.regularizer is Regularizer.L1 else config.sigma * d.dot(d) / 2


def _penalty_grad(d: np.ndarray, config: MklConfig) -> np.ndarray:
    return np.zeros_like(d) if config.regularizer is Regularizer.L1 else config.sigma * d


# ── Objective ─────────────────────────────────────────────────


def evaluate_objective(
    d, grams: GramSet, y, config: MklConfig, alpha0=None, svm_tol: float | None = None
) -> tuple[float, DualSolution]:
    """J(d) and the SVM solution it was computed from."""
    d = np.asarray(d, dtype=float)
    K = combine(d, grams)
    sol = solve_dual(K, y, C=config.C, tol=svm_tol or config.svm_tol, alpha0=alpha0)
    return sol.objective + _penalty(d, config), sol


def objective_gradient(d, grams: GramSet, y, sol: DualSolution, config: MklConfig) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    beta = sol.alpha * np.asarray(y, dtype=float)
    return _penalty_grad(d, config) - 0.5 * gradient_quadform(d, grams, beta)


# ── Training ──────────────────────────────────────────────────


def fit_standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def train(X, y, config: MklConfig) -> MklModel:
    """Fit kernel weights and SVM coefficients by alternating optimization."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"samples {X.shape} do not match {y.shape[0]} labels")
    for cls in (1, -1):
        if np.count_nonzero(y == cls) < 2:
            raise DataError(f"need at least 2 samples of class {cls:+d}")

    mean, std = fit_standardization(X)
    grams = build_grams((X - mean) / std, config.kernel)
    reg = config.regularizer

    d = _init_weights(grams.size, reg)
    J, sol = evaluate_objective(d, grams, y, config)
    trace = [J]
    stalled = False

    for it in range(config.outer_max_iter):
        grad = objective_gradient(d, grams, y, sol, config)
        step = config.step_init
        accepted = None
        while step >= config.min_step:
            d_new = project_feasible(d - step * grad, reg)
            if np.array_equal(d_new, d):
                break
            J_new, sol_new = evaluate_objective(d_new, grams, y, config, alpha0=sol.alpha)
            if J_new <= J + config.armijo * grad.dot(d_new - d):
                accepted = (d_new, J_new, sol_new)
                break
            step *= config.step_shrink
        if accepted is None:
            stalled = True
            logger.debug("outer iteration %d: no descent step, stopping", it)
            break
        change = abs(J - accepted[1]) / max(1.0, abs(J))
        d, J, sol = accepted
        trace.append(J)
        logger.debug("outer iteration %d: J=%.6g step=%.3g", it, J, step)
        if change < config.outer_tol:
            break

    model = MklModel(
        d=d, dual=sol, X=X, y=y, mean=mean, std=std, config=config,
        objective_trace=trace, stalled=stalled, _grams=grams,
    )
    try:
        model.R = compute_r(model)
    except DegenerateModelError as e:
        logger.warning("%s: %s", config.label, e)
    logger.info("trained %s in %d outer steps, R=%.4g", config.label, len(trace) - 1, model.R)
    return model


# ── R fitness ─────────────────────────────────────────────────


def margin_shares(model: MklModel) -> np.ndarray:
    """Split beta' K_d beta into one non-negative part per base term.

    A sum splits exactly: part_m = d_m beta' K_m beta.  A product has no
    additive blocks, so the total is shared in proportion to each term's pull
    on the exponent, |d_m beta' (D_m o K_d) beta|, falling back to d itself
    when every pull vanishes.
    """
    grams = model.grams
    beta = model.dual.alpha * model.y
    if grams.family is KernelFamily.SUM:
        return model.d * np.maximum(np.einsum("i,mij,j->m", beta, grams.mats, beta), 0.0)
    K = combine(model.d, grams)
    total = max(float(beta @ K @ beta), 0.0)
    pull = model.d * np.abs(np.einsum("i,mij,ij,j->m", beta, grams.mats, K, beta))
    if pull.sum() <= 0:
        pull = model.d
    if pull.sum() <= 0:
        return np.zeros_like(model.d)
    return total * pull / pull.sum()


def kernel_energies(model: MklModel) -> np.ndarray:
    """h_m = d_m * ||w_m||, with ||w_m||^2 = d_m * part_m from margin_shares.

    For a sum this is the primal block norm d_m * sqrt(beta' K_m beta).  In
    both families the parts add up to beta' K_d beta.
    """
    norms = np.sqrt(model.d * margin_shares(model))
    return model.d * norms


def r_fitness(h, b: float) -> float:
    """|(sum h - sum h^1.5) / (sum h + sum h^1.5) / b|."""
    h = np.asarray(h, dtype=float)
    if abs(b) < 1e-12:
        raise DegenerateModelError("R is undefined for a zero bias")
    s1 = float(h.sum())
    s2 = float(np.sum(h**1.5))
    if s1 + s2 < 1e-15:
        raise DegenerateModelError("R is undefined when every kernel energy is zero")
    return abs((s1 - s2) / (s1 + s2) / b)


def compute_r(model: MklModel) -> float:
    """R fitness of a trained model from its kernel energies and bias."""
    return r_fitness(kernel_energies(model), model.dual.b)


# ── Prediction ────────────────────────────────────────────────


def decision_values(model: MklModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.zeros(0)
    rows = combine_rows(model.d, model.config.kernel, model.standardize(model.X), model.standardize(X))
    return rows @ (model.dual.alpha * model.y) + model.dual.b


def predict_many(model: MklModel, X) -> np.ndarray:
    f = decision_values(model, X)
    flags = np.sign(f).astype(int)
    flags[flags == 0] = model.config.zero_decision
    return flags


def predict(model: MklModel, sample) -> int:
    """+1 normal, -1 attack for one sample (a FeatureVector or a raw feature row)."""
    if hasattr(sample, "window_index"):
        sample = [getattr(sample, name) for name in model.config.features]
    return int(predict_many(model, np.asarray(sample, dtype=float)[None, :])[0])


# ── Model selection ───────────────────────────────────────────


@dataclass
class SelectionRow:
    group: int
    family: str
    regularizer: str
    R: float
    accuracy: float
    error: str = ""


def select_model(
    X, y, candidates: Sequence[MklConfig], X_val=None, y_val=None,
) -> tuple[MklModel, list[SelectionRow]]:
    """Train every candidate and keep the one with the smallest R.

    Accuracy is measured on the validation split when given, otherwise on
    the training data.  A single candidate is returned unconditionally.
    Candidates train one after another, in the order given.
    """
    if not candidates:
        raise ValueError("no candidate configurations to select from")
    X_acc, y_acc = (X, y) if X_val is None else (X_val, y_val)

    models: list[MklModel | None] = []
    report: list[SelectionRow] = []
    for group, cfg in enumerate(candidates, start=1):
        row = SelectionRow(group, cfg.kernel.family.title, cfg.regularizer.value.upper(), math.nan, math.nan)
        try:
            model = train(X, y, cfg)
        except (ConvergenceError, DegenerateModelError) as e:
            if len(candidates) == 1:
                raise
            row.error = str(e)
            models.append(None)
            report.append(row)
            continue
        row.R = model.R
        row.accuracy = float(np.mean(predict_many(model, X_acc) == np.asarray(y_acc)))
        if math.isnan(model.R):
            row.error = "R undefined"
        models.append(model)
        report.append(row)

    if len(candidates) == 1:
        return models[0], report

    scored = [(row.R, k) for k, row in enumerate(report) if models[k] is not None and not math.isnan(row.R)]
    if not scored:
        raise DegenerateModelError("every candidate configuration is degenerate")
    best = min(scored)[1]
    logger.info("selected group %d (%s / %s), R=%.4g", report[best].group,
                report[best].family, report[best].regularizer, report[best].R)
    return models[best], report


# ── Persistence ───────────────────────────────────────────────


def _config_dict(cfg: MklConfig) -> dict:
    raw = asdict(cfg)
    raw["kernel"]["family"] = cfg.kernel.family.value
    raw["kernel"]["bandwidths"] = list(cfg.kernel.bandwidths)
    raw["regularizer"] = cfg.regularizer.value
    raw["features"] = list(cfg.features)
    return raw


def save_model(model: MklModel, out_path: Path) -> Path:
    """Write the model as a sorted-key JSON document."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema": MODEL_SCHEMA,
        "config": _config_dict(model.config),
        "standardization": {"mean": model.mean.tolist(), "std": model.std.tolist()},
        "d": model.d.tolist(),
        "alpha": model.dual.alpha.tolist(),
        "b": model.dual.b,
        "dual_objective": model.dual.objective,
        "R": None if math.isnan(model.R) else model.R,
        "objective_trace": list(model.objective_trace),
        "training": {"X": model.X.tolist(), "y": [int(v) for v in model.y]},
    }
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("saved model to %s", out_path)
    return out_path


def load_model(path: Path) -> MklModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file {path} not found")
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not a model document ({e})") from e
    if doc.get("schema") != MODEL_SCHEMA:
        raise DataError(f"{path}: unsupported model schema {doc.get('schema')!r}")
    try:
        raw = doc["config"]
        kernel = KernelConfig(
            family=KernelFamily(raw["kernel"]["family"]),
            bandwidths=tuple(raw["kernel"]["bandwidths"]),
            feature_dim=raw["kernel"]["feature_dim"],
            per_feature=raw["kernel"]["per_feature"],
        )
        cfg = MklConfig(**{**raw, "kernel": kernel, "features": tuple(raw["features"])})
        alpha = np.array(doc["alpha"], dtype=float)
        dual = DualSolution(alpha=alpha, b=float(doc["b"]), objective=float(doc["dual_objective"]), C=cfg.C)
        return MklModel(
            d=np.array(doc["d"], dtype=float),
            dual=dual,
            X=np.array(doc["training"]["X"], dtype=float).reshape(len(alpha), kernel.feature_dim),
            y=np.array(doc["training"]["y"], dtype=float),
            mean=np.array(doc["standardization"]["mean"], dtype=float),
            std=np.array(doc["standardization"]["std"], dtype=float),
            config=cfg,
            R=math.nan if doc["R"] is None else float(doc["R"]),
            objective_trace=[float(v) for v in doc["objective_trace"]],
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FlowGuardError):
            raise
        raise DataError(f"{path}: malformed model document ({e})") from e
