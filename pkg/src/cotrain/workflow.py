"""Data model for the interactive training workflow and the per-generation
lifted operators driving it.

K entities each hold a private feature/response pair and share one public
pair. Every generation they refit on a weighted mix of (private, public,
pooled-synthetic) data; ``build_operators`` assembles the Kd-dimensional
lifted matrices (g, p, q, pi) that express that refit as a linear map, and
``weighted_min_norm_fit`` / ``generate_synthetic`` are the two primitives the
stochastic simulation is made of.

Weight conventions: alpha is the share of newly generated synthetic data,
beta the private-vs-public split inside the reused initial portion; both live
in [0, 1], with alpha fixed to 0 at initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import matcore
from .errors import InvalidInputError, ShapeError

GRAM_SYMMETRY_TOL = 1e-12
GRAM_PSD_TOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """One feature matrix with its response vector."""

    features: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", matcore.as_matrix(self.features, "features"))
        object.__setattr__(self, "responses", matcore.as_vector(self.responses, "responses"))
        if self.features.shape[0] != self.responses.shape[0]:
            raise ShapeError(
                f"features have {self.features.shape[0]} rows but responses "
                f"have {self.responses.shape[0]} entries"
            )

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class InitialData:
    """Per-entity private datasets plus the single shared public dataset."""

    private: tuple[Dataset, ...]
    public: Dataset

    def __post_init__(self):
        object.__setattr__(self, "private", tuple(self.private))
        if len(self.private) < 1:
            raise InvalidInputError("need at least one entity")
        d = self.public.dim
        for k, ds in enumerate(self.private):
            if ds.dim != d:
                raise ShapeError(
                    f"entity {k} has {ds.dim} feature columns, public data has {d}"
                )

    @property
    def k_entities(self) -> int:
        return len(self.private)

    @property
    def dim(self) -> int:
        return self.public.dim


@dataclass(frozen=True)
class MixWeights:
    """Schedules alpha[t], beta[t] for t = 0..horizon, with alpha[0] == 0."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.alpha) != len(self.beta):
            raise ShapeError("alpha and beta schedules must have equal length")
        if not self.alpha:
            raise InvalidInputError("schedules must cover at least generation 0")
        if self.alpha[0] != 0.0:
            raise InvalidInputError("alpha at generation 0 must be 0")
        for name, sched in (("alpha", self.alpha), ("beta", self.beta)):
            for t, v in enumerate(sched):
                if not 0.0 <= v <= 1.0:
                    raise InvalidInputError(f"{name}[{t}]={v} outside [0, 1]")

    @property
    def horizon(self) -> int:
        return len(self.alpha) - 1

    @classmethod
    def stationary(
        cls, alpha: float, beta: float, horizon: int, beta0: float | None = None
    ) -> "MixWeights":
        """Constant weights for t >= 1; beta0 defaults to the stationary beta."""
        b0 = beta if beta0 is None else beta0
        return cls(
            alpha=(0.0,) + (float(alpha),) * horizon,
            beta=(float(b0),) + (float(beta),) * horizon,
        )


@dataclass(frozen=True)
class GroundTruth:
    """Shared regression coefficient theta and response noise variance."""

    theta: np.ndarray
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "theta", matcore.as_vector(self.theta, "theta"))
        if not self.sigma2 > 0:
            raise InvalidInputError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def _check_gram(name: str, s: np.ndarray) -> np.ndarray:
    s = matcore.as_matrix(s, name)
    if s.shape[0] != s.shape[1]:
        raise ShapeError(f"{name} must be square, got {s.shape}")
    sym_err = float(np.max(np.abs(s - s.T))) if s.size else 0.0
    scale = max(1.0, float(np.max(np.abs(s)))) if s.size else 1.0
    if sym_err > GRAM_SYMMETRY_TOL * scale:
        raise InvalidInputError(f"{name} is not symmetric (max asymmetry {sym_err:g})")
    if s.size:
        min_eig = float(np.linalg.eigvalsh(s)[0])
        if min_eig < -GRAM_PSD_TOL * max(float(np.trace(s)), 1.0):
            raise InvalidInputError(f"{name} is not PSD (min eigenvalue {min_eig:g})")
    return s


@dataclass(frozen=True)
class GramSet:
    """The Gram matrices entering one generation's operators.

    ``private[k]`` and ``public`` come from the initial data and never change;
    ``synthetic[k]`` is the Gram of entity k's generated features for the
    generation being built (all-zero d x d matrices at initialization).
    """

    private: tuple[np.ndarray, ...]
    public: np.ndarray
    synthetic: tuple[np.ndarray, ...]

    def __post_init__(self):
        priv = tuple(_check_gram(f"private gram {k}", s) for k, s in enumerate(self.private))
        syn = tuple(_check_gram(f"synthetic gram {k}", s) for k, s in enumerate(self.synthetic))
        pub = _check_gram("public gram", self.public)
        object.__setattr__(self, "private", priv)
        object.__setattr__(self, "synthetic", syn)
        object.__setattr__(self, "public", pub)
        if len(priv) != len(syn):
            raise ShapeError("need one synthetic gram per entity")
        d = pub.shape[0]
        for k in range(len(priv)):
            if priv[k].shape[0] != d or syn[k].shape[0] != d:
                raise ShapeError(f"entity {k} grams do not match dimension {d}")

    @property
    def k_entities(self) -> int:
        return len(self.private)

    @property
    def dim(self) -> int:
        return self.public.shape[0]

    @property
    def mean_synthetic(self) -> np.ndarray:
        """Average of the per-entity synthetic grams."""
        return sum(self.synthetic) / self.k_entities

    def private_lifted(self) -> np.ndarray:
        """Kd x Kd block diagonal of the private grams."""
        return matcore.block_diag(self.private)

    def synthetic_lifted(self) -> np.ndarray:
        """Kd x Kd block diagonal of the synthetic grams."""
        return matcore.block_diag(self.synthetic)

    @classmethod
    def from_features(
        cls,
        private_features: Sequence[np.ndarray],
        public_features: np.ndarray,
        synthetic_features: Sequence[np.ndarray] | None = None,
    ) -> "GramSet":
        d = matcore.as_matrix(public_features, "public features").shape[1]
        if synthetic_features is None:
            syn = tuple(np.zeros((d, d)) for _ in private_features)
        else:
            syn = tuple(build_gram(x) for x in synthetic_features)
        return cls(
            private=tuple(build_gram(x) for x in private_features),
            public=build_gram(public_features),
            synthetic=syn,
        )


@dataclass(frozen=True)
class LiftedOperators:
    """One generation's lifted maps.

    g: Kd x Kd weighted Gram aggregate (block diagonal).
    p: Kd x (K+1)d map applied to the stacked per-dataset OLS estimates.
    q: Kd x Kd feedback map applied to the previous generation's estimates.
    pi: Kd x Kd averaging projection (1/K)(ones_{KxK} kron I_d).
    """

    g: np.ndarray
    p: np.ndarray
    q: np.ndarray
    pi: np.ndarray
    alpha: float
    beta: float
    g_pinv: np.ndarray = field(repr=False)

    @property
    def kd(self) -> int:
        return self.g.shape[0]


def build_gram(features) -> np.ndarray:
    """X'X for a feature matrix X (symmetric PSD by construction)."""
    x = matcore.as_matrix(features, "features")
    s = x.T @ x
    return 0.5 * (s + s.T)


def build_projection(k: int, d: int) -> np.ndarray:
    """The averaging projection (1/K)(ones_{KxK} kron I_d)."""
    if k < 1 or d < 1:
        raise InvalidInputError(f"need k >= 1 and d >= 1, got k={k}, d={d}")
    return matcore.kron(np.full((k, k), 1.0 / k), np.eye(d))


def build_operators(grams: GramSet, alpha: float, beta: float) -> LiftedOperators:
    """Assemble (g, p, q, pi) for one generation from its Gram matrices.

    g = (1-a) b S_priv + (1-a)(1-b) (I kron S_pub) + a (I kron S_syn_mean)
    p = (1-a) g^+ [ b S_priv | (1-b) (ones_K kron S_pub) ]
    q = a g^+ pi S_syn
    """
    if not 0.0 <= alpha <= 1.0 or not 0.0 <= beta <= 1.0:
        raise InvalidInputError(f"alpha={alpha}, beta={beta} must lie in [0, 1]")
    k, d = grams.k_entities, grams.dim
    abar, bbar = 1.0 - alpha, 1.0 - beta

    s_priv = grams.private_lifted()
    s_syn = grams.synthetic_lifted()
    eye_k = np.eye(k)
    g = (
        abar * beta * s_priv
        + abar * bbar * matcore.kron(eye_k, grams.public)
        + alpha * matcore.kron(eye_k, grams.mean_synthetic)
    )
    g = 0.5 * (g + g.T)
    g_pinv = matcore.pinv(g)

    pub_stack = matcore.kron(np.ones((k, 1)), grams.public)  # Kd x d
    p = abar * (g_pinv @ np.hstack([beta * s_priv, bbar * pub_stack]))

    pi = build_projection(k, d)
    if alpha == 0.0:
        q = np.zeros((k * d, k * d))
    else:
        q = alpha * (g_pinv @ (pi @ s_syn))
    return LiftedOperators(g=g, p=p, q=q, pi=pi, alpha=alpha, beta=beta, g_pinv=g_pinv)


def weighted_min_norm_fit(datasets: Sequence[tuple]) -> np.ndarray:
    """Minimum-norm minimizer of sum_i w_i ||y_i - X_i theta||^2.

    Closed form (sum_i w_i X_i'X_i)^+ (sum_i w_i X_i'y_i). Zero-weight
    datasets contribute nothing; at least one weight must be positive.
    """
    if not datasets:
        raise InvalidInputError("need at least one dataset")
    gram = None
    moment = None
    any_positive = False
    d = None
    for i, (features, responses, weight) in enumerate(datasets):
        x = matcore.as_matrix(features, f"features {i}")
        y = matcore.as_vector(responses, f"responses {i}")
        if x.shape[0] != y.shape[0]:
            raise ShapeError(f"dataset {i}: {x.shape[0]} rows vs {y.shape[0]} responses")
        w = float(weight)
        if w < 0 or not np.isfinite(w):
            raise InvalidInputError(f"dataset {i} has invalid weight {weight}")
        if d is None:
            d = x.shape[1]
            gram = np.zeros((d, d))
            moment = np.zeros(d)
        elif x.shape[1] != d:
            raise ShapeError(f"dataset {i} has {x.shape[1]} columns, expected {d}")
        if w == 0.0:
            continue
        any_positive = True
        gram += w * (x.T @ x)
        moment += w * (x.T @ y)
    if not any_positive:
        raise InvalidInputError("all dataset weights are zero")
    return matcore.pinv(0.5 * (gram + gram.T)) @ moment


def generate_synthetic(
    theta_hat, features, sigma2: float, rng: np.random.Generator
) -> np.ndarray:
    """Responses X theta_hat + noise, noise iid N(0, sigma2)."""
    theta = matcore.as_vector(theta_hat, "theta_hat")
    x = matcore.as_matrix(features, "features")
    if x.shape[1] != theta.shape[0]:
        raise ShapeError(f"features have {x.shape[1]} columns, theta has {theta.shape[0]}")
    if sigma2 < 0 or not np.isfinite(sigma2):
        raise InvalidInputError(f"sigma2 must be nonnegative, got {sigma2}")
    mean = x @ theta
    if sigma2 == 0.0:
        return mean
    return mean + np.sqrt(sigma2) * rng.standard_normal(x.shape[0])
