"""RBF base kernels and their two combination families.

    sum:      K_d = sum_m d_m K_m,          K_m = exp(-g_m * dist_m)
    product:  K_d = exp(-sum_m d_m D_m),    D_m = g_m * dist_m

dist_m is the squared distance on one feature (per-feature terms) or on the
whole vector.  Each term pairs a feature with one bandwidth g_m.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from config import BANDWIDTHS


class KernelFamily(str, Enum):
    SUM = "sum"
    PRODUCT = "product"

    @property
    def title(self) -> str:
        return "Sum of RBF kernels" if self is KernelFamily.SUM else "Product of RBF kernels"


@dataclass(frozen=True)
class KernelConfig:
    family: KernelFamily
    bandwidths: tuple[float, ...] = BANDWIDTHS
    feature_dim: int = 2
    per_feature: bool = True  # False: one RBF per bandwidth on the full vector (sum only)

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if not self.bandwidths or any(not g > 0 for g in self.bandwidths):
            raise ValueError(f"bandwidths must be positive, got {self.bandwidths}")
        if self.family is KernelFamily.PRODUCT and not self.per_feature:
            raise ValueError("product kernels need one term per (feature, bandwidth)")
        if self.family is KernelFamily.SUM and len(self.terms) < 2:
            raise ValueError("a sum of RBF kernels needs at least 2 base kernels")

    @property
    def terms(self) -> list[tuple[int | None, float]]:
        """(feature index or None for the full vector, bandwidth) per base term."""
        if self.per_feature:
            return [(f, g) for f in range(self.feature_dim) for g in self.bandwidths]
        return [(None, g) for g in self.bandwidths]

    @property
    def size(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class GramSet:
    """Stacked (M, n, n) base matrices: K_m for sum, D_m for product."""

    config: KernelConfig
    mats: np.ndarray

    @property
    def family(self) -> KernelFamily:
        return self.config.family

    @property
    def size(self) -> int:
        return self.mats.shape[0]


# ── Base kernel ───────────────────────────────────────────────


def rbf(x, y, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    diff = x - y
    return float(np.exp(-gamma * diff.dot(diff)))


def _sq_dist(A: np.ndarray, B: np.ndarray, feature: int | None) -> np.ndarray:
    """Pairwise squared distances between rows of A and B (exactly symmetric when A is B)."""
    if feature is not None:
        diff = A[:, None, feature] - B[None, :, feature]
        return diff * diff
    diff = A[:, None, :] - B[None, :, :]
    return (diff * diff).sum(axis=-1)


def rbf_matrix(A, B, gamma: float) -> np.ndarray:
    """Full-vector RBF kernel between every row of A and every row of B."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return np.exp(-gamma * _sq_dist(A, B, None))


def _term_values(A: np.ndarray, B: np.ndarray, config: KernelConfig) -> np.ndarray:
    out = np.empty((config.size, A.shape[0], B.shape[0]))
    for m, (feature, gamma) in enumerate(config.terms):
        scaled = gamma * _sq_dist(A, B, feature)
        out[m] = np.exp(-scaled) if config.family is KernelFamily.SUM else scaled
    return out


def _check_samples(samples, config: KernelConfig) -> np.ndarray:
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[1] != config.feature_dim:
        raise ValueError(f"expected samples of shape (n, {config.feature_dim}), got {X.shape}")
    return X


def build_grams(samples, config: KernelConfig) -> GramSet:
    """Per-term base matrices over one sample set: K_m for sum, D_m for product."""
    X = _check_samples(samples, config)
    return GramSet(config, _term_values(X, X, config))


# ── Combination ───────────────────────────────────────────────


def _check_weights(d, size: int) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.shape != (size,):
        raise ValueError(f"expected {size} kernel weights, got shape {d.shape}")
    if np.any(d < 0):
        raise ValueError("kernel weights must be non-negative")
    return d


def _apply(d: np.ndarray, terms: np.ndarray, family: KernelFamily) -> np.ndarray:
    mixed = np.tensordot(d, terms, axes=1)
    return mixed if family is KernelFamily.SUM else np.exp(-mixed)


def combine(d, grams: GramSet) -> np.ndarray:
    """Weighted kernel K_d over the training samples."""
    d = _check_weights(d, grams.size)
    K = _apply(d, grams.mats, grams.family)
    return (K + K.T) / 2  # exact symmetry regardless of BLAS summation order


def combine_rows(d, config: KernelConfig, train, queries) -> np.ndarray:
    """Combined kernel between each query (rows) and every training sample (columns)."""
    d = _check_weights(d, config.size)
    X = _check_samples(train, config)
    Q = _check_samples(np.atleast_2d(np.asarray(queries, dtype=float)), config)
    return _apply(d, _term_values(Q, X, config), config.family)


def combine_row(d, config: KernelConfig, train, query) -> np.ndarray:
    """K_d between one query and every training sample."""
    return combine_rows(d, config, train, np.asarray(query, dtype=float)[None, :])[0]


def gradient_quadform(d, grams: GramSet, beta) -> np.ndarray:
    """d/d d_m of beta' K_d beta for every base term m."""
    d = _check_weights(d, grams.size)
    beta = np.asarray(beta, dtype=float)
    if grams.family is KernelFamily.SUM:
        return np.einsum("i,mij,j->m", beta, grams.mats, beta)
    K = combine(d, grams)
    return -np.einsum("i,mij,ij,j->m", beta, grams.mats, K, beta)
