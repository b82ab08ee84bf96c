"""Central configuration for the FlowGuard detection pipeline."""

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError

# Load .env file from project root (override any existing shell vars)
load_dotenv(Path(__file__).resolve().parent / ".env", override=True)

# ── Directories ──────────────────────────────────────────────
ROOT_DIR = Path(__file__).resolve().parent
DATA_DIR = ROOT_DIR / "data"
MODEL_DIR = ROOT_DIR / "models"
EVAL_DIR = ROOT_DIR / "eval"

# ── Environment ──────────────────────────────────────────────
DEFAULT_CONFIG_PATH = os.getenv("FLOWGUARD_CONFIG", "")
LOG_LEVEL = os.getenv("FLOWGUARD_LOG_LEVEL", "INFO")

# ── Windowing ────────────────────────────────────────────────
WINDOW_SECONDS = 1.0  # Δt, the feature extraction period

# ── Feature thresholds ───────────────────────────────────────
#    θ1, θ2 are weights; θ3..θ9 are rates in events per second.
THETA1 = 0.5
THETA2 = 0.5
THETA3 = 10.0  # per-source packet rate in an SDD class
THETA4 = 5.0  # extra destination ports in an SDD class
THETA5 = 10.0  # SH / DH port counts (IBF)
THETA6 = 10.0  # SH packet counts (MFF)
THETA7 = 10.0  # SD packet counts (MFF)
THETA8 = 10.0  # SH / DH port counts (MFF)
THETA9 = 10.0  # HSD destination ports (HIAD)
LITERAL_PACKET_WEIGHT = False  # Weight_packet without the Weight_SH fallback

# ── Classifier inputs ────────────────────────────────────────
FEATURES = ("sfv", "cdf")
FEATURE_COLUMNS = ("acd", "ffv", "ibf", "mff", "hiad", "sfv", "cdf")

# ── Kernel grid ──────────────────────────────────────────────
BANDWIDTHS = (2.0**-3, 2.0**-1, 2.0**1, 2.0**3)
KERNEL_FAMILIES = ("product", "sum")
REGULARIZERS = ("l1", "l2")

# ── SVM ──────────────────────────────────────────────────────
SVM_C = 10.0
SVM_TOL = 1e-3  # max KKT violation
SVM_MAX_ITER_FACTOR = 10  # pair updates allowed = factor * n^2

# ── MKL outer loop ───────────────────────────────────────────
SIGMA = 1.0  # L2 penalty strength
OUTER_MAX_ITER = 100
OUTER_TOL = 1e-6  # relative change in J(d)
STEP_INIT = 1.0
STEP_SHRINK = 0.5
ARMIJO = 1e-4
MIN_STEP = 1e-8
ZERO_DECISION = 1  # sign(0) maps to normal

# ── Splitting / evaluation ───────────────────────────────────
TRAIN_FRACTION = 0.7
SEED = 7
COMPARE_METHODS = ("svm", "smkl", "rgmkl")

# ── Scenario presets ─────────────────────────────────────────
#    Window counts follow the published sample counts; traffic volumes
#    are desk-scale.
SCENARIO_DURATION = 491
NORMAL_RATE = 40.0  # packets per second, requests and replies together
NORMAL_LOSS = 0.05  # share of normal requests that never get a reply
ATTACK_RATE = 200.0  # spoofed packets per second
ATTACK_RAMP = 6  # leading windows of each burst, rate doubling up to ATTACK_RATE
NORMAL_HOSTS = 60
SPOOF_POOL = 50_000
VICTIMS = 2

# Address pools
NORMAL_NET = "10.0.0.0/16"
VICTIM_NET = "192.168.1.0/24"
SPOOF_NET = "172.16.0.0/12"

# Server-side service ports for normal sessions
SERVICE_PORTS = (80, 443, 53, 22, 25, 8080)


# ── Run configuration ────────────────────────────────────────

_FLOAT_KEYS = {
    "THETA1", "THETA2", "THETA3", "THETA4", "THETA5", "THETA6", "THETA7",
    "THETA8", "THETA9", "WINDOW_SECONDS", "SIGMA", "SVM_C", "SVM_TOL",
    "OUTER_TOL", "STEP_INIT", "STEP_SHRINK", "ARMIJO", "MIN_STEP",
    "TRAIN_FRACTION",
}
_INT_KEYS = {"OUTER_MAX_ITER", "ZERO_DECISION", "SEED"}
_BOOL_KEYS = {"LITERAL_PACKET_WEIGHT"}
_LIST_KEYS = {"FEATURES", "KERNEL_FAMILIES", "REGULARIZERS", "COMPARE_METHODS"}
_FLOAT_LIST_KEYS = {"BANDWIDTHS"}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a run.  Validated on construction."""

    thetas: tuple[float, ...] = (
        THETA1, THETA2, THETA3, THETA4, THETA5, THETA6, THETA7, THETA8, THETA9,
    )
    window_seconds: float = WINDOW_SECONDS
    literal_packet_weight: bool = LITERAL_PACKET_WEIGHT
    features: tuple[str, ...] = FEATURES
    bandwidths: tuple[float, ...] = BANDWIDTHS
    kernel_families: tuple[str, ...] = KERNEL_FAMILIES
    regularizers: tuple[str, ...] = REGULARIZERS
    sigma: float = SIGMA
    svm_c: float = SVM_C
    svm_tol: float = SVM_TOL
    outer_max_iter: int = OUTER_MAX_ITER
    outer_tol: float = OUTER_TOL
    step_init: float = STEP_INIT
    step_shrink: float = STEP_SHRINK
    armijo: float = ARMIJO
    min_step: float = MIN_STEP
    zero_decision: int = ZERO_DECISION
    train_fraction: float = TRAIN_FRACTION
    seed: int = SEED
    compare_methods: tuple[str, ...] = COMPARE_METHODS
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.thetas) != 9:
            raise ConfigError(f"expected 9 thresholds, got {len(self.thetas)}")
        unknown = set(self.features) - set(FEATURE_COLUMNS)
        if unknown or not self.features:
            raise ConfigError(f"unknown classifier features: {sorted(unknown) or '(none)'}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"TRAIN_FRACTION must be in (0, 1), got {self.train_fraction}")
        unknown = set(self.compare_methods) - {"svm", "smkl", "gmkl", "rgmkl"}
        if unknown or not self.compare_methods:
            raise ConfigError(f"unknown comparison methods: {sorted(unknown) or '(none)'}")
        # Building the typed configs runs every module's own validation.
        self.thresholds()
        self.mkl_candidates()

    # ── typed views ──────────────────────────────────────────

    def thresholds(self):
        from features import Thresholds

        try:
            return Thresholds(
                *self.thetas, dt=self.window_seconds, literal_packet_weight=self.literal_packet_weight,
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def kernel_config(self, family: str):
        from kernels import KernelConfig, KernelFamily

        try:
            return KernelConfig(
                family=KernelFamily(family),
                bandwidths=tuple(self.bandwidths),
                feature_dim=len(self.features),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def mkl_config(self, family: str, regularizer: str):
        from mkl import MklConfig, Regularizer

        try:
            return MklConfig(
                kernel=self.kernel_config(family),
                regularizer=Regularizer(regularizer),
                sigma=self.sigma,
                C=self.svm_c,
                svm_tol=self.svm_tol,
                outer_max_iter=self.outer_max_iter,
                outer_tol=self.outer_tol,
                step_init=self.step_init,
                step_shrink=self.step_shrink,
                armijo=self.armijo,
                min_step=self.min_step,
                zero_decision=self.zero_decision,
                features=tuple(self.features),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def mkl_candidates(self) -> list:
        """The {family} x {regularizer} grid, regularizer-major like the result tables."""
        return [
            self.mkl_config(family, reg)
            for reg in self.regularizers
            for family in self.kernel_families
        ]

    def with_overrides(self, **overrides) -> "RunConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean) if clean else self


def _split_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip().lower() for part in raw.split(",") if part.strip())


def _parse_value(key: str, raw: str):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _BOOL_KEYS:
            if raw.strip().lower() in ("1", "true", "yes", "on"):
                return True
            if raw.strip().lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key in _FLOAT_LIST_KEYS:
            return tuple(float(v) for v in _split_list(raw))
        if key in _LIST_KEYS:
            return _split_list(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r}") from e
    raise ConfigError(f"unknown configuration key: {key}")


def load_run_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a KEY=VALUE config file (if any) and apply CLI overrides on top."""
    path = path or DEFAULT_CONFIG_PATH or None
    values: dict = {}
    if path:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        raw = dotenv_values(path)
        thetas = list(RunConfig().thetas)
        for key, val in raw.items():
            key = key.strip().upper()
            if val is None:
                raise ConfigError(f"missing value for {key} in {path}")
            parsed = _parse_value(key, val)
            if key.startswith("THETA"):
                thetas[int(key[5:]) - 1] = parsed
            else:
                values[key.lower()] = parsed
        values["thetas"] = tuple(thetas)
        values["source"] = str(path)
    try:
        cfg = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    return cfg.with_overrides(**overrides)
