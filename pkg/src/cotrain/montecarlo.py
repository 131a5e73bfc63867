"""Seeded stochastic simulation of the literal training workflow.

Each replication draws responses, fits every entity by weighted minimum-norm
least squares, generates synthetic responses from the fitted models, refits,
and repeats. Nothing here reuses the moment-recursion algebra: the simulation
is the independent check of the analytic dynamics, so estimates come out of
``weighted_min_norm_fit`` on raw (features, responses, weight) triples every
generation.

Randomness discipline: every draw comes from a generator keyed by
(seed, purpose-tag, generation, entity), so replications are order-independent
and (config, seed) -> trajectory is a pure function. Feature matrices are part
of the scenario (keyed by the config seed), never of the replication.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scenarios
from .errors import InvalidInputError
from .matcore import as_matrix, as_vector
from .scenarios import (
    TAG_INITIAL_NOISE,
    TAG_REPLICATION,
    TAG_SYNTHETIC_NOISE,
    MaterializedScenario,
    ScenarioConfig,
    stream,
    substream_seed,
)
from .workflow import Dataset, InitialData, generate_synthetic, weighted_min_norm_fit


@dataclass(frozen=True)
class Replication:
    """One full workflow run: stacked estimates for t = 0..horizon."""

    seed: int
    trajectory: np.ndarray  # (horizon + 1, K*d)

    def __post_init__(self):
        object.__setattr__(self, "trajectory", as_matrix(self.trajectory, "trajectory"))

    def at(self, generation: int) -> np.ndarray:
        return self.trajectory[generation]


@dataclass(frozen=True)
class EmpiricalMoments:
    """Sample mean/covariance of the stacked estimates across replications."""

    mean: np.ndarray
    cov: np.ndarray
    n_reps: int
    mean_standard_error: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", as_vector(self.mean, "mean"))
        object.__setattr__(self, "cov", as_matrix(self.cov, "cov"))
        object.__setattr__(
            self, "mean_standard_error", as_vector(self.mean_standard_error, "mean_standard_error")
        )


def draw_initial_responses(
    config: ScenarioConfig, seed: int, scenario: MaterializedScenario | None = None
) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    """Private and public responses from the shared-truth Gaussian model."""
    sc = scenario if scenario is not None else scenarios.materialize(config)
    sigma = np.sqrt(config.sigma2)
    private = tuple(
        sc.private[k] @ sc.theta
        + sigma * stream(seed, TAG_INITIAL_NOISE, k).standard_normal(sc.private[k].shape[0])
        for k in range(config.k_entities)
    )
    public = sc.public @ sc.theta + sigma * stream(
        seed, TAG_INITIAL_NOISE, config.k_entities
    ).standard_normal(sc.public.shape[0])
    return private, public


def initial_data_from(
    scenario: MaterializedScenario,
    responses: tuple[tuple[np.ndarray, ...], np.ndarray],
) -> InitialData:
    private_y, public_y = responses
    return InitialData(
        private=tuple(
            Dataset(features=x, responses=y) for x, y in zip(scenario.private, private_y)
        ),
        public=Dataset(features=scenario.public, responses=public_y),
    )


def simulate_once(
    config: ScenarioConfig,
    seed: int,
    initial_responses: tuple[tuple[np.ndarray, ...], np.ndarray] | None = None,
) -> Replication:
    """Run the workflow once; deterministic in (config, seed).

    ``initial_responses`` lets a caller pin the initial data across
    replications (the conditional regime); when omitted they are drawn from
    this replication's own streams (the unconditional regime).
    """
    sc = scenarios.materialize(config)
    k, d = config.k_entities, config.dim
    weights = config.weights()
    if initial_responses is None:
        initial_responses = draw_initial_responses(config, seed, sc)
    private_y, public_y = initial_responses

    trajectory = np.empty((config.horizon + 1, k * d))
    beta0 = weights.beta[0]
    estimates = [
        weighted_min_norm_fit(
            [
                (sc.private[j], private_y[j], beta0),
                (sc.public, public_y, 1.0 - beta0),
            ]
        )
        for j in range(k)
    ]
    trajectory[0] = np.concatenate(estimates)

    for t in range(1, config.horizon + 1):
        alpha, beta = weights.alpha[t], weights.beta[t]
        features_t = sc.synthetic[t - 1]
        if alpha > 0.0:
            synthetic_y = [
                generate_synthetic(
                    estimates[j],
                    features_t[j],
                    config.sigma2,
                    stream(seed, TAG_SYNTHETIC_NOISE, t, j),
                )
                for j in range(k)
            ]
            pooled = [
                (features_t[j], synthetic_y[j], alpha / k) for j in range(k)
            ]
        else:
            pooled = []
        abar = 1.0 - alpha
        estimates = [
            weighted_min_norm_fit(
                [
                    (sc.private[j], private_y[j], abar * beta),
                    (sc.public, public_y, abar * (1.0 - beta)),
                ]
                + pooled
            )
            for j in range(k)
        ]
        trajectory[t] = np.concatenate(estimates)
    return Replication(seed=seed, trajectory=trajectory)


def estimate_moments(
    config: ScenarioConfig,
    n_reps: int,
    base_seed: int,
    generation: int,
    condition_on_initial: bool,
) -> EmpiricalMoments:
    """Empirical moments of the stacked estimates at one generation.

    With ``condition_on_initial`` the initial responses are drawn once from
    ``base_seed`` and shared by every replication, so only the synthetic
    noise varies (the conditional regime); otherwise each replication draws
    its own initial responses (the unconditional regime).
    """
    if n_reps < 2:
        raise InvalidInputError(f"need at least 2 replications, got {n_reps}")
    if not 0 <= generation <= config.horizon:
        raise InvalidInputError(
            f"generation {generation} outside 0..{config.horizon}"
        )
    shared = draw_initial_responses(config, base_seed) if condition_on_initial else None
    samples = np.empty((n_reps, config.k_entities * config.dim))
    for i in range(n_reps):
        rep_seed = substream_seed(base_seed, TAG_REPLICATION, i)
        rep = simulate_once(config, rep_seed, initial_responses=shared)
        samples[i] = rep.at(generation)
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    return EmpiricalMoments(
        mean=mean,
        cov=0.5 * (cov + cov.T),
        n_reps=n_reps,
        mean_standard_error=np.sqrt(np.diag(cov) / n_reps),
    )
