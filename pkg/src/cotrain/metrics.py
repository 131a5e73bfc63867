"""Scalar summaries of moment objects: per-entity MSE, MSPE on a target
design, relative efficiency against the pooled all-real-data estimator, and
the cross-entity dispersion of the conditional-mean map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, PreconditionError, ShapeError
from .matcore import as_matrix, as_vector, is_full_rank
from .workflow import GroundTruth, InitialData, build_gram

METRIC_NAMES = ("mse", "mspe", "rel_efficiency", "dispersion")

# Entity index used for rows that aggregate over entities (dispersion, means).
AGGREGATE_ENTITY = -1


@dataclass(frozen=True)
class MetricRecord:
    """One long-format result row."""

    generation: int
    entity: int
    metric: str
    target: int | None
    value: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise InvalidInputError(f"unknown metric {self.metric!r}")
        if not np.isfinite(self.value):
            raise InvalidInputError(f"non-finite value for {self.metric}: {self.value}")
        if self.metric in ("mse", "mspe", "dispersion") and self.value < 0:
            raise InvalidInputError(f"{self.metric} must be nonnegative, got {self.value}")
        if self.metric == "rel_efficiency" and not self.value > 0:
            raise InvalidInputError(f"rel_efficiency must be positive, got {self.value}")


def mean_block(mean: np.ndarray, k: int, d: int) -> np.ndarray:
    return np.asarray(mean, dtype=float)[k * d : (k + 1) * d]


def cov_block(cov: np.ndarray, k: int, d: int) -> np.ndarray:
    c = np.asarray(cov, dtype=float)
    return c[k * d : (k + 1) * d, k * d : (k + 1) * d]


def _entity_count(moments, d: int) -> int:
    kd = np.asarray(moments.mean).shape[0]
    if kd % d != 0:
        raise ShapeError(f"moment vector length {kd} is not a multiple of dim {d}")
    return kd // d


def entity_mse(moments, truth: GroundTruth, k: int) -> float:
    """E||estimate_k - theta||^2 = ||bias_k||^2 + trace(cov_kk)."""
    d = truth.dim
    n_entities = _entity_count(moments, d)
    if not 0 <= k < n_entities:
        raise InvalidInputError(f"entity index {k} out of range for K={n_entities}")
    bias = mean_block(moments.mean, k, d) - truth.theta
    return float(bias @ bias + np.trace(cov_block(moments.cov, k, d)))


def entity_mspe(
    moments, truth: GroundTruth, k: int, target_features, per_row: bool = False
) -> float:
    """E||X_target (estimate_k - theta)||^2; per_row divides by the number of
    target rows for cross-design comparability."""
    x = as_matrix(target_features, "target features")
    d = truth.dim
    if x.shape[1] != d:
        raise ShapeError(f"target features have {x.shape[1]} columns, expected {d}")
    n_entities = _entity_count(moments, d)
    if not 0 <= k < n_entities:
        raise InvalidInputError(f"entity index {k} out of range for K={n_entities}")
    bias = mean_block(moments.mean, k, d) - truth.theta
    proj = x @ bias
    value = float(proj @ proj + np.trace(x @ cov_block(moments.cov, k, d) @ x.T))
    if per_row:
        return value / x.shape[0] if x.shape[0] else 0.0
    return value


def pooled_gram(initial: InitialData) -> np.ndarray:
    g = build_gram(initial.public.features)
    for ds in initial.private:
        g = g + build_gram(ds.features)
    return 0.5 * (g + g.T)


def pooled_mvue_mse(initial: InitialData, truth: GroundTruth) -> float:
    """MSE of the least-squares fit pooling every real dataset:
    sigma2 * trace((sum_k S_k + S_pub)^{-1}). Requires the pooled Gram to be
    full rank, otherwise no unbiased pooled estimator exists."""
    g = pooled_gram(initial)
    if not is_full_rank(g):
        raise PreconditionError(
            "pooled real-data gram is rank deficient; relative efficiency is undefined"
        )
    eigs = np.linalg.eigvalsh(g)
    return float(truth.sigma2 * np.sum(1.0 / eigs))


def relative_efficiency(moments, initial: InitialData, truth: GroundTruth, k: int) -> float:
    """Ratio of the pooled-estimator MSE to entity k's workflow MSE; close to
    one means the workflow is near optimal for that entity."""
    workflow_mse = entity_mse(moments, truth, k)
    if workflow_mse <= 0.0:
        raise PreconditionError(
            f"entity {k} workflow MSE is {workflow_mse}; efficiency ratio is degenerate"
        )
    return pooled_mvue_mse(initial, truth) / workflow_mse


def dispersion(m_t, k: int, d: int) -> float:
    """Largest Frobenius distance between two entities' row blocks of the
    conditional-mean map; zero iff every entity applies the same linear map
    to the initial estimates (exact consensus)."""
    m = as_matrix(m_t, "mean map")
    if m.shape[0] != k * d:
        raise ShapeError(f"mean map has {m.shape[0]} rows, expected k*d={k * d}")
    if m.shape[1] % d != 0:
        raise ShapeError(f"mean map has {m.shape[1]} columns, not a multiple of d={d}")
    blocks = [m[i * d : (i + 1) * d, :] for i in range(k)]
    worst = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            worst = max(worst, float(np.linalg.norm(blocks[i] - blocks[j], "fro")))
    return worst
