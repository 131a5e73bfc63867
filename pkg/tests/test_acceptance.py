"""Acceptance suite: one test per primary acceptance criterion, each printing
a PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s`` to see
them inline). Tolerances are fixed here, not calibrated elsewhere.
"""

import time

import numpy as np
import pytest

import cotrain
from cotrain import (
    GramSet,
    GroundTruth,
    ScenarioConfig,
    build_operators,
    certify_convergence,
    pinv,
    spectral_radius,
    step_moments,
    unconditional_moments,
    unconditional_moments_general,
)
from cotrain import experiments, scenarios
from cotrain.dynamics import MomentState, asymptotic_moments

from conftest import battery_configs, random_psd


class criterion:
    """Prints one PASS/FAIL line per acceptance criterion."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        print(f"[acceptance] {status}  {self.name}")
        return False


def oracle_config():
    # K=2, d=4, 30 private rows per entity, 30 public rows, full-rank
    # Gaussian features, alpha = beta = 0.5, sigma2 = 1, horizon 5
    return ScenarioConfig(
        k_entities=2, dim=4, private_rows=(30, 30), public_rows=30,
        private_rank=4, public_rank=4, synthetic_rows=(30, 30),
        alpha_schedule=(0.5,) * 5, beta_schedule=(0.5,) * 5, beta0=0.5,
        sigma2=1.0, theta_spec="unit_random", horizon=5, seed=102,
        feature_mode="gaussian", synthetic_feature_mode="fixed",
    )


def test_conditional_moment_oracle_equivalence():
    """Conditional mean within 3 SE componentwise and covariance within 5%
    Frobenius of the analytic recursion, at 20000 replications, in under
    2 minutes."""
    with criterion("conditional moments match the Monte Carlo oracle (2e4 reps, <2 min)"):
        start = time.monotonic()
        report = experiments.mc_comparison_report(oracle_config(), n_reps=20_000, base_seed=31)
        elapsed = time.monotonic() - start
        assert report["max_abs_z"] < 3.0, report["per_generation"]
        for row in report["per_generation"][1:]:
            assert row["cov_frobenius_rel_err"] < 0.05, row
        assert elapsed < 120.0, f"took {elapsed:.1f}s"


def test_full_feedback_linear_variance_growth():
    """K=1 with only synthetic data reused each generation: the feedback map
    is the identity and the conditional covariance grows exactly linearly."""
    with criterion("alpha=1 linear variance growth, entrywise 1e-10 for t<=20"):
        rng = np.random.default_rng(8)
        d = 4
        grams = GramSet(
            private=(random_psd(rng, d),),
            public=random_psd(rng, d),
            synthetic=(random_psd(rng, d),),
        )
        grams0 = GramSet(private=grams.private, public=grams.public,
                         synthetic=(np.zeros((d, d)),))
        ops0 = build_operators(grams0, alpha=0.0, beta=0.5)
        ops1 = build_operators(grams, alpha=1.0, beta=0.5)
        sigma2 = 1.0
        s = grams.synthetic_lifted()
        s_plus = pinv(s)
        state = MomentState(m=ops0.p, c=np.zeros((d, d)), generation=0)
        for t in range(1, 21):
            state = step_moments(state, ops1, s, sigma2)
            assert np.max(np.abs(state.c - t * sigma2 * s_plus)) <= 1e-10, f"t={t}"


def test_alpha_zero_freeze():
    """With no synthetic data in the mix, the mean map and covariance stay at
    their initial values, exactly, for 50 generations, in every battery
    scenario."""
    with criterion("alpha=0 freeze: M_t = M_0 and C_t = 0 exactly for t<=50"):
        for cfg in battery_configs():
            frozen = cfg.replace(alpha_schedule=(0.0,) * 50,
                                 beta_schedule=(cfg.beta_schedule[0],) * 50,
                                 horizon=50)
            sc = scenarios.materialize(frozen)
            states, _, _ = experiments.moment_trajectory(sc)
            for state in states[1:]:
                assert np.array_equal(state.m, states[0].m)
                assert np.all(state.c == 0.0)


def test_convergence_certificate_soundness():
    """200 random proportional-mixture scenarios with mixing weight in (0,1],
    alpha in [0, 0.99], beta in (0, lambda]: the measured feedback spectral
    radius is below one every single time."""
    with criterion("certificate soundness: rho(Q) < 1 on 200 certified scenarios"):
        rng = np.random.default_rng(4242)
        for trial in range(200):
            k = int(rng.integers(1, 5))
            d = int(rng.integers(2, 7))
            privs = tuple(random_psd(rng, d) for _ in range(k))
            pub = random_psd(rng, d)
            lam = float(rng.uniform(0.005, 1.0))
            gamma = float(rng.uniform(0.1, 4.0))
            alpha = float(rng.uniform(0.0, 0.99))
            beta = float(rng.uniform(1e-4, lam))
            syn = tuple(gamma * (lam * s + (1 - lam) * pub) for s in privs)
            grams = GramSet(private=privs, public=pub, synthetic=syn)
            cert = certify_convergence(grams, alpha, beta)
            assert cert.guaranteed, f"trial {trial}: certificate not granted"
            assert cert.rho < 1.0, f"trial {trial}: rho={cert.rho}"


def stationary_operator_setup(cfg):
    sc = scenarios.materialize(cfg)
    grams = experiments.generation_gram_set(sc, 1)
    weights = cfg.weights()
    ops = build_operators(grams, alpha=weights.alpha[1], beta=weights.beta[1])
    ops0 = build_operators(experiments.base_gram_set(sc), alpha=0.0, beta=weights.beta[0])
    truth = experiments.scenario_truth(sc)
    return sc, grams, ops0, ops, truth


def test_limit_consistency():
    """Wherever the measured spectral radius is at most 0.95, iterating the
    recursion reaches the closed-form limits within 1e-8 Frobenius and the
    limit covariance satisfies its fixed point to 1e-9."""
    with criterion("limit consistency: recursion -> closed form (1e-8) and "
                   "Lyapunov residual < 1e-9 whenever rho <= 0.95"):
        fig3_cell = scenarios.stationary_cell_config(
            scenarios.get_preset("fig3").base, 0.5, 1.0
        )
        checked = 0
        for cfg in list(battery_configs()) + [fig3_cell]:
            sc, grams, ops0, ops, truth = stationary_operator_setup(cfg)
            rho = spectral_radius(ops.q).radius
            if rho > 0.95:
                continue
            limit = asymptotic_moments(
                ops, grams.synthetic_lifted(), grams, cfg.sigma2, truth
            )
            assert limit.lyapunov_residual < 1e-9
            kd = ops.kd
            state = MomentState(m=ops0.p, c=np.zeros((kd, kd)), generation=0)
            s = grams.synthetic_lifted()
            prev_m, prev_c = state.m, state.c
            for _ in range(5000):
                state = step_moments(state, ops, s, cfg.sigma2)
                if (
                    np.linalg.norm(state.m - prev_m, "fro") < 1e-12
                    and np.linalg.norm(state.c - prev_c, "fro") < 1e-12
                ):
                    break
                prev_m, prev_c = state.m, state.c
            assert np.linalg.norm(state.m - limit.m, "fro") <= 1e-8, f"rho={rho}"
            assert np.linalg.norm(state.c - limit.c, "fro") <= 1e-8, f"rho={rho}"
            checked += 1
        assert checked >= 3, "battery produced too few contractive scenarios"


def test_unbiasedness_and_vanishing_bias():
    """Full-rank initial aggregate: zero bias at every generation. Rank-
    deficient initial aggregate with a contractive feedback map: bias norm
    below 1e-6 ||theta|| by generation 30."""
    with criterion("unbiasedness (full-rank start) and vanishing bias "
                   "(rank-deficient start, t=30)"):
        # full-rank start
        cfg = oracle_config()
        sc = scenarios.materialize(cfg)
        truth = experiments.scenario_truth(sc)
        states, ops_chain, gram_sets = experiments.moment_trajectory(sc)
        target = np.tile(sc.theta, cfg.k_entities)
        for t in range(cfg.horizon + 1):
            moments = unconditional_moments(
                states[: t + 1], ops_chain[1 : t + 1], ops_chain[0].g, truth, gram_sets[0]
            )
            assert np.max(np.abs(moments.mean - target)) <= 1e-10, f"t={t}"

        # rank-deficient start: private-only initialization on rank-2
        # designs, public data re-enters from generation 1
        rng = np.random.default_rng(2024)
        k, d, r = 2, 6, 2
        bases = [np.linalg.qr(rng.standard_normal((d, r)))[0] for _ in range(k)]
        privs = tuple(
            (lambda x: x.T @ x)(rng.standard_normal((20, r)) @ b.T) for b in bases
        )
        pub = rng.standard_normal((40, d))
        syn = tuple((lambda x: x.T @ x)(rng.standard_normal((20, d))) for _ in range(k))
        g0set = GramSet(private=privs, public=pub.T @ pub, synthetic=(np.zeros((d, d)),) * k)
        gset = GramSet(private=privs, public=pub.T @ pub, synthetic=syn)
        ops0 = build_operators(g0set, alpha=0.0, beta=1.0)
        ops = build_operators(gset, alpha=0.2, beta=0.9)
        assert spectral_radius(ops.q).radius < 1.0
        theta = rng.standard_normal(d)
        theta /= np.linalg.norm(theta)
        truth = GroundTruth(theta=theta, sigma2=1.0)
        states = [MomentState(m=ops0.p, c=np.zeros((k * d, k * d)), generation=0)]
        chain = []
        s_lift = gset.synthetic_lifted()
        for _ in range(30):
            states.append(step_moments(states[-1], ops, s_lift, 1.0))
            chain.append(ops)
        start_bias = np.linalg.norm(
            unconditional_moments(states[:1], [], ops0.g, truth, g0set).mean
            - np.tile(theta, k)
        )
        assert start_bias > 0.1
        end_bias = np.linalg.norm(
            unconditional_moments(states, chain, ops0.g, truth, g0set).mean
            - np.tile(theta, k)
        )
        assert end_bias <= 1e-6 * np.linalg.norm(theta), f"bias={end_bias:.3e}"


def test_efficiency_sweep_qualitative_shape():
    """K=4, d=15, rank-5 private data, beta=1: some moderate synthetic-data
    share strictly improves every entity's relative efficiency over the
    no-synthetic baseline, and every efficiency stays in (0, 1.05]."""
    with criterion("efficiency sweep: some alpha in (0,1) beats alpha=0 for "
                   "all four entities at beta=1"):
        preset = scenarios.get_preset("fig3")
        table = experiments.efficiency_table(
            preset.base, preset.alpha_grid, (1.0,), preset_name="fig3-beta1"
        )
        assert not table.manifest["skipped_cells"]
        eff = {}
        for r in table.records:
            if r.metric == "rel_efficiency" and r.entity >= 0:
                eff.setdefault(r.alpha, {})[r.entity] = r.value
        base = eff[0.0]
        k = preset.base.k_entities
        improving = [
            a for a in sorted(eff)
            if a > 0 and all(eff[a][i] > base[i] for i in range(k))
        ]
        assert improving, "no alpha improved every entity"
        values = [v for per in eff.values() for v in per.values()]
        assert min(values) > 0 and max(values) <= 1.05


@pytest.fixture(scope="module")
def fig4_table(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig4")
    start = time.monotonic()
    preset = scenarios.get_preset("fig4")
    table = experiments.run_experiment(preset, out, fmt="csv")
    table.elapsed = time.monotonic() - start
    return table


def test_trajectory_grid_homogenization(fig4_table):
    """K=3, d=50, rank 15, (alpha, beta) in {0, 0.5, 1}^2: mixing synthetic
    data (alpha=0.5) strictly shrinks the cross-entity spread of prediction
    error on every task by generation 15, for beta in {0.5, 1}. The full
    analytic grid runs in under 5 minutes."""
    with criterion("trajectory grid: alpha=0.5 homogenizes cross-entity MSPE "
                   "by generation 15 (beta in {0.5, 1}), grid < 5 min"):
        assert fig4_table.elapsed < 300.0, f"took {fig4_table.elapsed:.0f}s"
        spread = {}
        per_task = {}
        for r in fig4_table.records:
            if r.metric == "mspe" and r.generation == 15:
                per_task.setdefault((r.alpha, r.beta), {}).setdefault(r.target, {})[
                    r.entity
                ] = r.value
        for cell, tasks in per_task.items():
            spread[cell] = max(max(v.values()) - min(v.values()) for v in tasks.values())
        for beta in (0.5, 1.0):
            assert spread[(0.5, beta)] < spread[(0.0, beta)], (
                f"beta={beta}: {spread[(0.5, beta)]} !< {spread[(0.0, beta)]}"
            )


def test_llm_scale_results_not_reproduced(fig4_table):
    """Large-model fine-tuning results are out of scope at desk scale; the
    behavior they exhibit is covered only by the structural homogenization
    check on the analytic trajectory grid above."""
    with criterion("LLM-scale runs not attempted; covered by the structural "
                   "homogenization analogue only"):
        # the structural analogue exists and was produced analytically,
        # with no model training anywhere in the dependency closure
        assert any(r.metric == "mspe" for r in fig4_table.records)
        import sys
        assert "torch" not in sys.modules and "transformers" not in sys.modules
