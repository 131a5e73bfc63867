"""Experiment drivers: analytic trajectory tables, relative-efficiency sweeps
over (alpha, beta) grids, Monte Carlo comparison reports, and the CSV/JSON
emission they share.

Output contract: long-format rows (alpha, beta, seed, generation, entity,
metric, target, value) sorted by grid cell, then generation, then entity.
``generation = -1`` marks limit (t -> infinity) rows and ``entity = -1``
marks rows aggregated over entities. Every run also writes a JSON manifest
holding the resolved configuration, tool version, wall clock, and any grid
cells that were skipped because the requested limit does not exist.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__ as _version
from . import dynamics, metrics, montecarlo, scenarios
from .dynamics import (
    MomentState,
    asymptotic_moments,
    certify_convergence,
    step_moments,
    unconditional_moments_general,
)
from .errors import DivergenceError, InvalidInputError, PreconditionError
from .matcore import block_diag, pinv
from .metrics import AGGREGATE_ENTITY, MetricRecord
from .scenarios import ExperimentPreset, MaterializedScenario, ScenarioConfig
from .workflow import GramSet, GroundTruth, build_gram, build_operators

CSV_COLUMNS = ("alpha", "beta", "seed", "generation", "entity", "metric", "target", "value")


def scenario_truth(sc: MaterializedScenario) -> GroundTruth:
    return GroundTruth(theta=sc.theta, sigma2=sc.config.sigma2)


def scenario_initial_data(sc: MaterializedScenario, seed: int | None = None):
    """InitialData with responses drawn from (seed or config seed)."""
    responses = montecarlo.draw_initial_responses(
        sc.config, sc.config.seed if seed is None else seed, sc
    )
    return montecarlo.initial_data_from(sc, responses)


def base_gram_set(sc: MaterializedScenario) -> GramSet:
    return GramSet.from_features(sc.private, sc.public)


def generation_gram_set(sc: MaterializedScenario, t: int) -> GramSet:
    """Grams entering generation t's fit (t >= 1)."""
    base = base_gram_set(sc)
    return GramSet(
        private=base.private,
        public=base.public,
        synthetic=tuple(build_gram(x) for x in sc.synthetic[t - 1]),
    )


def moment_trajectory(sc: MaterializedScenario):
    """Operator chain and conditional moment states for t = 0..horizon."""
    config = sc.config
    weights = config.weights()
    grams0 = base_gram_set(sc)
    ops = [build_operators(grams0, alpha=weights.alpha[0], beta=weights.beta[0])]
    kd = config.k_entities * config.dim
    states = [MomentState(m=ops[0].p, c=np.zeros((kd, kd)), generation=0)]
    gram_sets = [grams0]
    for t in range(1, config.horizon + 1):
        grams_t = generation_gram_set(sc, t)
        ops_t = build_operators(grams_t, alpha=weights.alpha[t], beta=weights.beta[t])
        s_t = grams_t.synthetic_lifted()
        states.append(step_moments(states[-1], ops_t, s_t, config.sigma2))
        ops.append(ops_t)
        gram_sets.append(grams_t)
    return states, ops, gram_sets


@dataclass
class TrajectoryTable:
    """Long-format metric records plus the manifest describing their run."""

    records: list[MetricRecord]
    manifest: dict
    seed: int

    def sorted_records(self) -> list[MetricRecord]:
        return sorted(
            self.records,
            key=lambda r: (
                r.alpha,
                r.beta,
                r.generation,
                r.entity,
                r.metric,
                -1 if r.target is None else r.target,
            ),
        )

    def rows(self) -> list[dict]:
        out = []
        for r in self.sorted_records():
            out.append(
                {
                    "alpha": r.alpha,
                    "beta": r.beta,
                    "seed": self.seed,
                    "generation": r.generation,
                    "entity": r.entity,
                    "metric": r.metric,
                    "target": r.target,
                    "value": r.value,
                }
            )
        return out

    def write_csv(self, path: Path) -> None:
        path = Path(path)
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for row in self.rows():
                    writer.writerow(
                        [
                            repr(float(row["alpha"])),
                            repr(float(row["beta"])),
                            row["seed"],
                            row["generation"],
                            row["entity"],
                            row["metric"],
                            "" if row["target"] is None else row["target"],
                            repr(float(row["value"])),
                        ]
                    )
        except OSError as exc:
            raise InvalidInputError(f"cannot write CSV to {path}: {exc}") from exc

    def write_json(self, path: Path) -> None:
        path = Path(path)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.rows(), fh, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise InvalidInputError(f"cannot write JSON to {path}: {exc}") from exc

    def write_manifest(self, path: Path) -> None:
        path = Path(path)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.manifest, fh, indent=1, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise InvalidInputError(f"cannot write manifest to {path}: {exc}") from exc


def _trajectory_cell_records(
    sc: MaterializedScenario, alpha_label: float, beta_label: float
) -> list[MetricRecord]:
    """Per-generation unconditional metrics for one (alpha, beta) cell."""
    config = sc.config
    truth = scenario_truth(sc)
    states, _, gram_sets = moment_trajectory(sc)
    initial = scenario_initial_data(sc)
    try:
        pooled = metrics.pooled_mvue_mse(initial, truth)
    except PreconditionError:
        pooled = None
    k, d = config.k_entities, config.dim
    records = []
    for state in states:
        moments = unconditional_moments_general(state, truth, gram_sets[0])
        for i in range(k):
            mse = metrics.entity_mse(moments, truth, i)
            records.append(
                MetricRecord(
                    generation=state.generation,
                    entity=i,
                    metric="mse",
                    target=None,
                    value=mse,
                    alpha=alpha_label,
                    beta=beta_label,
                )
            )
            if pooled is not None and mse > 0:
                records.append(
                    MetricRecord(
                        generation=state.generation,
                        entity=i,
                        metric="rel_efficiency",
                        target=None,
                        value=pooled / mse,
                        alpha=alpha_label,
                        beta=beta_label,
                    )
                )
            for m in range(k):
                records.append(
                    MetricRecord(
                        generation=state.generation,
                        entity=i,
                        metric="mspe",
                        target=m,
                        value=metrics.entity_mspe(moments, truth, i, sc.private[m]),
                        alpha=alpha_label,
                        beta=beta_label,
                    )
                )
        records.append(
            MetricRecord(
                generation=state.generation,
                entity=AGGREGATE_ENTITY,
                metric="dispersion",
                target=None,
                value=metrics.dispersion(state.m, k, d),
                alpha=alpha_label,
                beta=beta_label,
            )
        )
    return records


def trajectory_table(config: ScenarioConfig) -> TrajectoryTable:
    """Analytic per-generation metrics for a single configuration."""
    start = time.monotonic()
    sc = scenarios.materialize(config)
    weights = config.weights()
    alpha_label = weights.alpha[1] if config.horizon >= 1 else 0.0
    beta_label = weights.beta[1] if config.horizon >= 1 else weights.beta[0]
    records = _trajectory_cell_records(sc, alpha_label, beta_label)
    manifest = _manifest(
        kind="trajectory",
        preset=None,
        configs=[config.to_dict()],
        skipped=[],
        elapsed=time.monotonic() - start,
    )
    return TrajectoryTable(records=records, manifest=manifest, seed=config.seed)


def _limit_cell_records(
    sc: MaterializedScenario, alpha: float, beta: float
) -> list[MetricRecord]:
    """Limit-of-recursion efficiency metrics for one stationary cell.

    alpha = 0 freezes the workflow at its initial fit, so the 'limit' is the
    generation-0 moments, which exist for any rank profile; alpha > 0 uses
    the closed-form limits and therefore requires a convergent feedback map.
    """
    config = sc.config
    truth = scenario_truth(sc)
    k = config.k_entities
    if alpha == 0.0:
        grams0 = base_gram_set(sc)
        ops0 = build_operators(grams0, alpha=0.0, beta=beta)
        kd = k * config.dim
        state = MomentState(m=ops0.p, c=np.zeros((kd, kd)), generation=0)
        moments = unconditional_moments_general(state, truth, grams0)
    else:
        grams = generation_gram_set(sc, 1)
        ops = build_operators(grams, alpha=alpha, beta=beta)
        limit = asymptotic_moments(
            ops, grams.synthetic_lifted(), grams, config.sigma2, truth
        )
        moments = dynamics.UnconditionalMoments(mean=limit.mean, cov=limit.cov)
    initial = scenario_initial_data(sc)
    records = []
    efficiencies = []
    for i in range(k):
        mse = metrics.entity_mse(moments, truth, i)
        eff = metrics.relative_efficiency(moments, initial, truth, i)
        efficiencies.append(eff)
        records.append(
            MetricRecord(
                generation=-1, entity=i, metric="mse", target=None,
                value=mse, alpha=alpha, beta=beta,
            )
        )
        records.append(
            MetricRecord(
                generation=-1, entity=i, metric="rel_efficiency", target=None,
                value=eff, alpha=alpha, beta=beta,
            )
        )
    records.append(
        MetricRecord(
            generation=-1, entity=AGGREGATE_ENTITY, metric="rel_efficiency", target=None,
            value=float(np.mean(efficiencies)), alpha=alpha, beta=beta,
        )
    )
    return records


def efficiency_table(
    base: ScenarioConfig,
    alpha_grid,
    beta_grid,
    preset_name: str | None = None,
) -> TrajectoryTable:
    """Relative-efficiency records over an (alpha, beta) grid.

    Cells whose feedback map diverges (or whose limit preconditions fail) are
    skipped and listed in the manifest rather than emitted as rows.
    """
    alpha_grid = tuple(float(a) for a in alpha_grid)
    beta_grid = tuple(float(b) for b in beta_grid)
    if not alpha_grid or not beta_grid:
        raise InvalidInputError("efficiency grid is empty")
    if base.synthetic_feature_mode != "fixed":
        raise InvalidInputError(
            "efficiency limits require synthetic_feature_mode='fixed' "
            "(stationary synthetic Grams)"
        )
    start = time.monotonic()
    records: list[MetricRecord] = []
    skipped = []
    cell_configs = []
    for beta in beta_grid:
        for alpha in alpha_grid:
            cfg = scenarios.stationary_cell_config(base, alpha, beta)
            cell_configs.append(cfg.to_dict())
            sc = scenarios.materialize(cfg)
            try:
                records.extend(_limit_cell_records(sc, alpha, beta))
            except (DivergenceError, PreconditionError) as exc:
                skipped.append({"alpha": alpha, "beta": beta, "reason": str(exc)})
    if not records:
        raise DivergenceError(
            "every grid cell diverged; no limits exist for this configuration",
            rho=float("nan"),
        )
    manifest = _manifest(
        kind="efficiency",
        preset=preset_name,
        configs=cell_configs,
        skipped=skipped,
        elapsed=time.monotonic() - start,
        notes=[
            "alpha grid spacing and beta panel values are a library choice, "
            "not externally specified",
        ],
    )
    return TrajectoryTable(records=records, manifest=manifest, seed=base.seed)


def grid_trajectory_table(
    base: ScenarioConfig,
    alpha_grid,
    beta_grid,
    preset_name: str | None = None,
) -> TrajectoryTable:
    """Per-generation metric records over an (alpha, beta) grid."""
    alpha_grid = tuple(float(a) for a in alpha_grid)
    beta_grid = tuple(float(b) for b in beta_grid)
    if not alpha_grid or not beta_grid:
        raise InvalidInputError("trajectory grid is empty")
    start = time.monotonic()
    records: list[MetricRecord] = []
    cell_configs = []
    for beta in beta_grid:
        for alpha in alpha_grid:
            cfg = scenarios.stationary_cell_config(base, alpha, beta)
            cfg = cfg.replace(horizon=base.horizon)
            cell_configs.append(cfg.to_dict())
            sc = scenarios.materialize(cfg)
            records.extend(_trajectory_cell_records(sc, alpha, beta))
    manifest = _manifest(
        kind="trajectory-grid",
        preset=preset_name,
        configs=cell_configs,
        skipped=[],
        elapsed=time.monotonic() - start,
    )
    return TrajectoryTable(records=records, manifest=manifest, seed=base.seed)


def run_experiment(preset_or_config, output_dir, fmt: str = "csv") -> TrajectoryTable:
    """Run a preset or single config and write table + manifest into a directory."""
    if fmt not in ("csv", "json"):
        raise InvalidInputError(f"format must be csv or json, got {fmt!r}")
    if isinstance(preset_or_config, ExperimentPreset):
        preset = preset_or_config
        if preset.kind == "efficiency":
            table = efficiency_table(
                preset.base, preset.alpha_grid, preset.beta_grid, preset_name=preset.name
            )
        else:
            table = grid_trajectory_table(
                preset.base, preset.alpha_grid, preset.beta_grid, preset_name=preset.name
            )
        stem = preset.name
    elif isinstance(preset_or_config, ScenarioConfig):
        table = trajectory_table(preset_or_config)
        stem = "trajectory"
    else:
        raise InvalidInputError(
            f"expected an ExperimentPreset or ScenarioConfig, got {type(preset_or_config)!r}"
        )
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create output directory {out}: {exc}") from exc
    data_path = out / f"{stem}.{fmt}"
    if fmt == "csv":
        table.write_csv(data_path)
    else:
        table.write_json(data_path)
    table.manifest["output"] = data_path.name
    table.write_manifest(out / f"{stem}_manifest.json")
    return table


def _manifest(kind, preset, configs, skipped, elapsed, notes=None) -> dict:
    return {
        "tool": "cotrain",
        "tool_version": _version,
        "kind": kind,
        "preset": preset,
        "configs": configs,
        "skipped_cells": skipped,
        "wall_clock_seconds": round(elapsed, 3),
        "notes": notes or [],
    }


def conditional_theory_moments(
    sc: MaterializedScenario, responses
) -> list[dynamics.UnconditionalMoments]:
    """Conditional mean/cov per generation for one realization of the
    initial responses: mean = m_t applied to the stacked OLS estimates."""
    private_y, public_y = responses
    states, _, _ = moment_trajectory(sc)
    ols = np.concatenate(
        [pinv(x) @ y for x, y in zip(sc.private, private_y)]
        + [pinv(sc.public) @ public_y]
    )
    return [
        dynamics.UnconditionalMoments(mean=state.m @ ols, cov=state.c) for state in states
    ]


def mc_comparison_report(config: ScenarioConfig, n_reps: int, base_seed: int) -> dict:
    """Conditional Monte Carlo vs analytic moments, per generation.

    Reports the largest componentwise z-score of the empirical mean against
    the analytic conditional mean and the Frobenius relative error of the
    empirical covariance, at every generation.
    """
    if n_reps < 2:
        raise InvalidInputError(f"need at least 2 replications, got {n_reps}")
    start = time.monotonic()
    sc = scenarios.materialize(config)
    responses = montecarlo.draw_initial_responses(config, base_seed, sc)
    theory = conditional_theory_moments(sc, responses)

    kd = config.k_entities * config.dim
    samples = np.empty((n_reps, config.horizon + 1, kd))
    for i in range(n_reps):
        rep_seed = scenarios.substream_seed(base_seed, scenarios.TAG_REPLICATION, i)
        samples[i] = montecarlo.simulate_once(config, rep_seed, initial_responses=responses).trajectory

    per_generation = []
    overall_z = 0.0
    for t in range(config.horizon + 1):
        draws = samples[:, t, :]
        emp_mean = draws.mean(axis=0)
        emp_cov = np.atleast_2d(np.cov(draws, rowvar=False, ddof=1))
        se = np.sqrt(np.diag(emp_cov) / n_reps)
        diff = emp_mean - theory[t].mean
        scale = max(1.0, float(np.max(np.abs(theory[t].mean))))
        with np.errstate(divide="ignore", invalid="ignore"):
            # differences at float-noise level count as exact agreement, which
            # matters at t=0 where every conditional replication coincides
            z = np.where(
                np.abs(diff) <= 1e-9 * scale,
                0.0,
                np.divide(np.abs(diff), se, out=np.full_like(se, np.inf), where=se > 0),
            )
        max_z = float(np.max(z))
        theory_norm = float(np.linalg.norm(theory[t].cov, "fro"))
        err = float(np.linalg.norm(emp_cov - theory[t].cov, "fro"))
        cov_rel = err / theory_norm if theory_norm > 0 else err
        per_generation.append(
            {
                "generation": t,
                "max_abs_z": max_z,
                "cov_frobenius_rel_err": cov_rel,
            }
        )
        overall_z = max(overall_z, max_z)
    return {
        "tool_version": _version,
        "config": config.to_dict(),
        "n_reps": n_reps,
        "base_seed": base_seed,
        "conditional": True,
        "per_generation": per_generation,
        "max_abs_z": overall_z,
        "final_cov_rel_err": per_generation[-1]["cov_frobenius_rel_err"],
        "wall_clock_seconds": round(time.monotonic() - start, 3),
    }


def _require_stationary(config: ScenarioConfig) -> tuple[float, float]:
    if config.horizon < 1:
        raise InvalidInputError("limit analysis needs horizon >= 1")
    alphas = set(config.alpha_schedule[: config.horizon])
    betas = set(config.beta_schedule[: config.horizon])
    if len(alphas) != 1 or len(betas) != 1:
        raise InvalidInputError("limit analysis requires constant alpha/beta schedules")
    if config.synthetic_feature_mode != "fixed":
        raise InvalidInputError("limit analysis requires synthetic_feature_mode='fixed'")
    return next(iter(alphas)), next(iter(betas))


def certificate_report(config: ScenarioConfig) -> dict:
    """Convergence certificate for a config's stationary weights."""
    alpha, beta = _require_stationary(config)
    sc = scenarios.materialize(config)
    grams = generation_gram_set(sc, 1)
    cert = certify_convergence(grams, alpha, beta)
    return {
        "tool_version": _version,
        "alpha": alpha,
        "beta": beta,
        "proportional": cert.proportional,
        "mix_lambda": cert.mix_lambda,
        "scale": cert.scale,
        "rho": cert.rho,
        "guaranteed": cert.guaranteed,
        "fit_residual": cert.fit_residual,
    }


def limits_report(config: ScenarioConfig) -> dict:
    """Certificate plus closed-form limit moments; raises DivergenceError
    (CLI exit 2) when the feedback map does not contract."""
    alpha, beta = _require_stationary(config)
    sc = scenarios.materialize(config)
    truth = scenario_truth(sc)
    grams = generation_gram_set(sc, 1)
    cert = certify_convergence(grams, alpha, beta)
    ops = build_operators(grams, alpha=alpha, beta=beta)
    limit = asymptotic_moments(ops, grams.synthetic_lifted(), grams, config.sigma2, truth)
    moments = dynamics.UnconditionalMoments(mean=limit.mean, cov=limit.cov)
    mse = [metrics.entity_mse(moments, truth, i) for i in range(config.k_entities)]
    return {
        "tool_version": _version,
        "alpha": alpha,
        "beta": beta,
        "certificate": {
            "proportional": cert.proportional,
            "mix_lambda": cert.mix_lambda,
            "scale": cert.scale,
            "rho": cert.rho,
            "guaranteed": cert.guaranteed,
        },
        "rho": limit.rho,
        "lyapunov_residual": limit.lyapunov_residual,
        "limit_mse_per_entity": mse,
        "limit_dispersion": metrics.dispersion(limit.m, config.k_entities, config.dim),
    }
