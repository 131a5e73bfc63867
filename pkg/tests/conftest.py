"""Shared helpers for the test suite: random matrix factories and the
standard scenario battery (full-rank and rank-deficient initial data for
K in {1, 2, 3, 4})."""

import numpy as np
import pytest

from cotrain import ScenarioConfig


def random_psd(rng, d, rank=None):
    """Random PSD d x d matrix of the given rank."""
    r = d if rank is None else rank
    if r < d:
        basis = np.linalg.qr(rng.standard_normal((d, r)))[0]
        x = rng.standard_normal((r + 3, r)) @ basis.T
    else:
        x = rng.standard_normal((r + 3, d))
    return x.T @ x


def random_matrix_with_rank(rng, rows, cols, rank):
    u = rng.standard_normal((rows, rank))
    v = rng.standard_normal((rank, cols))
    return u @ v


def battery_configs():
    """Scenarios used by the cross-module oracle checks: full-rank initial
    data for K in {1, 2}, rank-deficient initial Grams for K in {3, 4}."""
    full = dict(
        sigma2=1.0,
        theta_spec="unit_random",
        feature_mode="gaussian",
        synthetic_feature_mode="fixed",
    )
    return [
        ScenarioConfig(
            k_entities=1, dim=3, private_rows=(20,), public_rows=15,
            private_rank=3, public_rank=3, synthetic_rows=(20,),
            alpha_schedule=(0.5,) * 5, beta_schedule=(0.5,) * 5, beta0=0.5,
            horizon=5, seed=101, **full,
        ),
        ScenarioConfig(
            k_entities=2, dim=4, private_rows=(30, 30), public_rows=30,
            private_rank=4, public_rank=4, synthetic_rows=(30, 30),
            alpha_schedule=(0.5,) * 5, beta_schedule=(0.5,) * 5, beta0=0.5,
            horizon=5, seed=102, **full,
        ),
        ScenarioConfig(
            k_entities=3, dim=6, private_rows=(25, 25, 25), public_rows=25,
            private_rank=3, public_rank=6, synthetic_rows=(25, 25, 25),
            alpha_schedule=(0.4,) * 5, beta_schedule=(1.0,) * 5, beta0=1.0,
            sigma2=1.0, theta_spec="unit_random", feature_mode="low_rank",
            synthetic_feature_mode="fixed", horizon=5, seed=103,
        ),
        ScenarioConfig(
            k_entities=4, dim=8, private_rows=(20,) * 4, public_rows=20,
            private_rank=3, public_rank=8, synthetic_rows=(20,) * 4,
            alpha_schedule=(0.5,) * 5, beta_schedule=(0.6,) * 5, beta0=0.6,
            sigma2=1.0, theta_spec="unit_random", feature_mode="low_rank",
            synthetic_feature_mode="fixed", horizon=5, seed=104,
        ),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
