"""Scenario configuration, seeded feature generation, and experiment presets.

A ScenarioConfig fully determines an experiment: entity count, dimension,
sample sizes, feature ranks, weight schedules, noise level, truth vector and
seed. Features are a pure function of (config, role, entity, generation) so
the analytic moment machinery and the Monte Carlo simulation always see the
same matrices, and replications never redraw them.

Named presets reproduce the library's standard figure configurations:
``fig3`` (K=4 relative-efficiency sweep over alpha at several beta panels),
``fig4`` (K=3 per-generation error trajectories over a 3x3 alpha/beta grid)
and ``fig5`` (the K=2 variant of fig4).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .workflow import MixWeights

FEATURE_MODES = ("gaussian", "low_rank")
SYNTHETIC_FEATURE_MODES = ("fixed", "redraw_per_generation")

# Stream tags: every random draw in the package comes from a generator seeded
# by (seed, tag, *indices), so streams are independent and order-free.
TAG_THETA = 1
TAG_PRIVATE_FEATURES = 2
TAG_PUBLIC_FEATURES = 3
TAG_SYNTHETIC_FEATURES = 4
TAG_BASIS = 5
TAG_INITIAL_NOISE = 6
TAG_SYNTHETIC_NOISE = 7
TAG_REPLICATION = 8

_ROLE_TAGS = {"private": 0, "public": 1, "synthetic": 2}
_SEED_MASK = (1 << 64) - 1


def stream(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator keyed by (seed, *tags)."""
    entropy = [int(seed) & _SEED_MASK] + [int(t) & _SEED_MASK for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def substream_seed(seed: int, *tags: int) -> int:
    """A 64-bit seed derived from (seed, *tags), for handing to children."""
    entropy = [int(seed) & _SEED_MASK] + [int(t) & _SEED_MASK for t in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def _as_count_tuple(value, k: int, name: str) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        counts = (int(value),) * k
    else:
        counts = tuple(int(v) for v in value)
    if len(counts) != k:
        raise InvalidInputError(f"{name} must give one count per entity ({k}), got {len(counts)}")
    if any(c < 0 for c in counts):
        raise InvalidInputError(f"{name} contains a negative count: {counts}")
    return counts


def _as_schedule(value, horizon: int, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float, np.floating, np.integer)):
        sched = (float(value),) * horizon
    else:
        sched = tuple(float(v) for v in value)
    if len(sched) < horizon:
        raise InvalidInputError(
            f"{name} has {len(sched)} entries but horizon is {horizon}"
        )
    for t, v in enumerate(sched, start=1):
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"{name}[{t}]={v} outside [0, 1]")
    return sched


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, hashable description of one experiment."""

    k_entities: int
    dim: int
    private_rows: tuple[int, ...]
    public_rows: int
    private_rank: int
    public_rank: int
    synthetic_rows: tuple[int, ...]
    alpha_schedule: tuple[float, ...]  # generations 1..horizon
    beta_schedule: tuple[float, ...]
    beta0: float
    sigma2: float
    theta_spec: tuple[float, ...] | str
    horizon: int
    seed: int
    feature_mode: str
    synthetic_feature_mode: str

    def __post_init__(self):
        if self.k_entities < 1:
            raise InvalidInputError(f"k_entities must be >= 1, got {self.k_entities}")
        if self.dim < 1:
            raise InvalidInputError(f"dim must be >= 1, got {self.dim}")
        if self.horizon < 0:
            raise InvalidInputError(f"horizon must be >= 0, got {self.horizon}")
        if self.public_rows < 0:
            raise InvalidInputError(f"public_rows must be >= 0, got {self.public_rows}")
        object.__setattr__(
            self, "private_rows", _as_count_tuple(self.private_rows, self.k_entities, "private_rows")
        )
        object.__setattr__(
            self,
            "synthetic_rows",
            _as_count_tuple(self.synthetic_rows, self.k_entities, "synthetic_rows"),
        )
        object.__setattr__(
            self, "alpha_schedule", _as_schedule(self.alpha_schedule, self.horizon, "alpha_schedule")
        )
        object.__setattr__(
            self, "beta_schedule", _as_schedule(self.beta_schedule, self.horizon, "beta_schedule")
        )
        if not 0.0 <= self.beta0 <= 1.0:
            raise InvalidInputError(f"beta0={self.beta0} outside [0, 1]")
        if not self.sigma2 > 0:
            raise InvalidInputError(f"sigma2 must be positive, got {self.sigma2}")
        if self.feature_mode not in FEATURE_MODES:
            raise InvalidInputError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}"
            )
        if self.synthetic_feature_mode not in SYNTHETIC_FEATURE_MODES:
            raise InvalidInputError(
                f"synthetic_feature_mode must be one of {SYNTHETIC_FEATURE_MODES}, "
                f"got {self.synthetic_feature_mode!r}"
            )
        for name, rank in (("private_rank", self.private_rank), ("public_rank", self.public_rank)):
            if not 1 <= rank <= self.dim:
                raise InvalidInputError(f"{name}={rank} must be in [1, dim={self.dim}]")
        if self.feature_mode == "gaussian" and (
            self.private_rank != self.dim or self.public_rank != self.dim
        ):
            raise InvalidInputError(
                "gaussian feature_mode draws full-dimensional features; set "
                "feature_mode='low_rank' to honor private_rank/public_rank below dim"
            )
        if isinstance(self.theta_spec, str):
            if self.theta_spec != "unit_random":
                raise InvalidInputError(
                    f"theta_spec must be 'unit_random' or an explicit vector, got {self.theta_spec!r}"
                )
        else:
            vec = tuple(float(v) for v in self.theta_spec)
            if len(vec) != self.dim:
                raise InvalidInputError(
                    f"theta_spec has {len(vec)} entries but dim is {self.dim}"
                )
            object.__setattr__(self, "theta_spec", vec)

    def weights(self) -> MixWeights:
        """Full schedules for t = 0..horizon (alpha starts at 0)."""
        return MixWeights(
            alpha=(0.0,) + self.alpha_schedule[: self.horizon],
            beta=(self.beta0,) + self.beta_schedule[: self.horizon],
        )

    def replace(self, **changes) -> "ScenarioConfig":
        base = asdict(self)
        base.update(changes)
        return ScenarioConfig(**base)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["private_rows"] = list(self.private_rows)
        out["synthetic_rows"] = list(self.synthetic_rows)
        out["alpha_schedule"] = list(self.alpha_schedule)
        out["beta_schedule"] = list(self.beta_schedule)
        if not isinstance(self.theta_spec, str):
            out["theta_spec"] = list(self.theta_spec)
        return out


_CONFIG_DEFAULTS = {
    "beta0": None,  # resolved to beta_schedule[0]
    "sigma2": 1.0,
    "theta_spec": "unit_random",
    "feature_mode": "gaussian",
    "synthetic_feature_mode": "fixed",
}


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build a config from JSON-style keys; unknown keys are rejected."""
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(
        known - set(raw) - set(_CONFIG_DEFAULTS)
        - {"private_rank", "public_rank"}
    )
    if missing:
        raise InvalidInputError(f"missing config keys: {', '.join(missing)}")
    data = dict(raw)
    dim = int(data["dim"])
    data.setdefault("private_rank", dim)
    data.setdefault("public_rank", dim)
    for key, default in _CONFIG_DEFAULTS.items():
        if data.get(key) is None:
            data[key] = default
    if data["beta0"] is None:
        sched = data["beta_schedule"]
        if isinstance(sched, (int, float)):
            data["beta0"] = float(sched)
        elif len(sched) > 0:
            data["beta0"] = float(sched[0])
        else:
            raise InvalidInputError("beta0 is required when beta_schedule is empty")
    if isinstance(data["theta_spec"], list):
        data["theta_spec"] = tuple(data["theta_spec"])
    return ScenarioConfig(**data)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise InvalidInputError(f"config file {path} must hold a JSON object")
    return config_from_dict(raw)


def scenario_theta(config: ScenarioConfig) -> np.ndarray:
    """The ground-truth coefficient vector for a scenario."""
    if isinstance(config.theta_spec, str):
        rng = stream(config.seed, TAG_THETA)
        v = rng.standard_normal(config.dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:  # pragma: no cover - measure-zero draw
            v = np.ones(config.dim)
            norm = np.linalg.norm(v)
        return v / norm
    return np.asarray(config.theta_spec, dtype=float)


def _low_rank_basis(config: ScenarioConfig, role: str, entity: int, rank: int) -> np.ndarray:
    """d x rank orthonormal basis, fixed per (role, entity)."""
    rng = stream(config.seed, TAG_BASIS, _ROLE_TAGS[role], entity)
    raw = rng.standard_normal((config.dim, rank))
    q, _ = np.linalg.qr(raw)
    return q[:, :rank]


def generate_features(
    config: ScenarioConfig,
    role: str,
    rng: np.random.Generator,
    entity: int = 0,
    n_rows: int | None = None,
) -> np.ndarray:
    """Draw one feature matrix for the given role.

    In gaussian mode rows are iid standard normal in d dimensions. In
    low_rank mode rows are Z B' with Z iid standard normal in rank dimensions
    and B an orthonormal basis fixed per (role, entity), so the Gram has rank
    min(rank, n_rows). Synthetic features for entity k reuse entity k's
    private basis: generated data comes from prompts drawn out of the
    entity's own domain, so it probes the same directions as the private
    design. (With generic full-dimensional synthetic features the feedback
    map sits at the edge of stability whenever beta = 1 and the private
    Grams are rank deficient.)
    """
    if role not in _ROLE_TAGS:
        raise InvalidInputError(f"unknown feature role {role!r}")
    if n_rows is None:
        if role == "private":
            n_rows = config.private_rows[entity]
        elif role == "public":
            n_rows = config.public_rows
        else:
            n_rows = config.synthetic_rows[entity]
    if config.feature_mode == "gaussian":
        return rng.standard_normal((n_rows, config.dim))
    rank = config.private_rank if role in ("private", "synthetic") else config.public_rank
    if rank == config.dim:
        return rng.standard_normal((n_rows, config.dim))
    basis_role = "private" if role == "synthetic" else role
    basis = _low_rank_basis(config, basis_role, entity, rank)
    z = rng.standard_normal((n_rows, rank))
    return z @ basis.T


@dataclass(frozen=True)
class MaterializedScenario:
    """All deterministic inputs of a scenario: truth plus every feature matrix.

    ``synthetic[t-1][k]`` is entity k's generation-t feature matrix; in the
    ``fixed`` synthetic mode the same per-entity matrices repeat across t.
    """

    config: ScenarioConfig
    theta: np.ndarray
    private: tuple[np.ndarray, ...]
    public: np.ndarray
    synthetic: tuple[tuple[np.ndarray, ...], ...]


@lru_cache(maxsize=64)
def materialize(config: ScenarioConfig) -> MaterializedScenario:
    """Draw (deterministically) every feature matrix of a scenario."""
    k = config.k_entities
    private = tuple(
        generate_features(config, "private", stream(config.seed, TAG_PRIVATE_FEATURES, i), entity=i)
        for i in range(k)
    )
    public = generate_features(config, "public", stream(config.seed, TAG_PUBLIC_FEATURES))
    if config.synthetic_feature_mode == "fixed":
        base = tuple(
            generate_features(
                config, "synthetic", stream(config.seed, TAG_SYNTHETIC_FEATURES, 0, i), entity=i
            )
            for i in range(k)
        )
        synthetic = tuple(base for _ in range(config.horizon))
    else:
        synthetic = tuple(
            tuple(
                generate_features(
                    config, "synthetic", stream(config.seed, TAG_SYNTHETIC_FEATURES, t, i), entity=i
                )
                for i in range(k)
            )
            for t in range(1, config.horizon + 1)
        )
    for arr in (*private, public, *(x for gen in synthetic for x in gen)):
        arr.setflags(write=False)
    theta = scenario_theta(config)
    theta.setflags(write=False)
    return MaterializedScenario(
        config=config, theta=theta, private=private, public=public, synthetic=synthetic
    )


@dataclass(frozen=True)
class ExperimentPreset:
    """A named base config plus the (alpha, beta) grid it sweeps."""

    name: str
    kind: str  # "efficiency" (limit curves) or "trajectory" (per-generation)
    base: ScenarioConfig
    alpha_grid: tuple[float, ...]
    beta_grid: tuple[float, ...]


def _preset_fig3() -> ExperimentPreset:
    base = ScenarioConfig(
        k_entities=4,
        dim=15,
        private_rows=(30, 30, 30, 30),
        public_rows=30,
        private_rank=5,
        public_rank=15,
        synthetic_rows=(30, 30, 30, 30),
        alpha_schedule=(0.0,),
        beta_schedule=(1.0,),
        beta0=1.0,
        sigma2=0.1,
        theta_spec="unit_random",
        horizon=1,
        seed=20301,
        feature_mode="low_rank",
        synthetic_feature_mode="fixed",
    )
    alpha_grid = tuple(round(0.05 * i, 2) for i in range(20))  # 0.00 .. 0.95
    return ExperimentPreset(
        name="fig3", kind="efficiency", base=base, alpha_grid=alpha_grid, beta_grid=(0.25, 0.5, 1.0)
    )


def _preset_trajectory(name: str, k: int, seed: int) -> ExperimentPreset:
    base = ScenarioConfig(
        k_entities=k,
        dim=50,
        private_rows=(40,) * k,
        public_rows=60,
        private_rank=15,
        public_rank=50,
        synthetic_rows=(60,) * k,
        alpha_schedule=(0.0,) * 15,
        beta_schedule=(1.0,) * 15,
        beta0=1.0,
        sigma2=0.1,
        theta_spec="unit_random",
        horizon=15,
        seed=seed,
        feature_mode="low_rank",
        synthetic_feature_mode="fixed",
    )
    grid = (0.0, 0.5, 1.0)
    return ExperimentPreset(name=name, kind="trajectory", base=base, alpha_grid=grid, beta_grid=grid)


_PRESET_BUILDERS = {
    "fig3": _preset_fig3,
    "fig4": lambda: _preset_trajectory("fig4", k=3, seed=20401),
    "fig5": lambda: _preset_trajectory("fig5", k=2, seed=20501),
}

PRESET_NAMES = tuple(sorted(_PRESET_BUILDERS))


def get_preset(name: str, seed: int | None = None) -> ExperimentPreset:
    if name not in _PRESET_BUILDERS:
        raise InvalidInputError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    preset = _PRESET_BUILDERS[name]()
    if seed is not None:
        preset = ExperimentPreset(
            name=preset.name,
            kind=preset.kind,
            base=preset.base.replace(seed=int(seed)),
            alpha_grid=preset.alpha_grid,
            beta_grid=preset.beta_grid,
        )
    return preset


def stationary_cell_config(base: ScenarioConfig, alpha: float, beta: float) -> ScenarioConfig:
    """The base config with constant weights (alpha, beta) and beta0 = beta."""
    horizon = max(base.horizon, 1)
    return base.replace(
        alpha_schedule=(float(alpha),) * horizon,
        beta_schedule=(float(beta),) * horizon,
        beta0=float(beta),
        horizon=horizon,
    )
