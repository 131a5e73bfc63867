import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import cotrain
from cotrain import InvalidInputError, ScenarioConfig, config_from_dict, generate_features
from cotrain import experiments, scenarios
from cotrain.cli import cli_main
from cotrain.matcore import matrix_rank


def config_dict(**overrides):
    base = dict(
        k_entities=2, dim=3, private_rows=10, public_rows=10, synthetic_rows=10,
        alpha_schedule=0.4, beta_schedule=0.6, horizon=3, seed=7,
    )
    base.update(overrides)
    return base


class TestConfig:
    def test_scalar_expansion(self):
        cfg = config_from_dict(config_dict())
        assert cfg.private_rows == (10, 10)
        assert cfg.alpha_schedule == (0.4, 0.4, 0.4)
        assert cfg.beta0 == 0.6  # defaults to the stationary beta
        assert cfg.private_rank == 3  # defaults to dim

    def test_unknown_keys_rejected(self):
        with pytest.raises(InvalidInputError, match="unknown config keys"):
            config_from_dict(config_dict(extra_knob=1))

    def test_missing_keys_rejected(self):
        raw = config_dict()
        raw.pop("dim")
        with pytest.raises(InvalidInputError, match="missing config keys"):
            config_from_dict(raw)

    def test_rank_above_dim_rejected(self):
        with pytest.raises(InvalidInputError):
            config_from_dict(config_dict(private_rank=4, feature_mode="low_rank"))

    def test_gaussian_mode_requires_full_ranks(self):
        with pytest.raises(InvalidInputError, match="low_rank"):
            config_from_dict(config_dict(private_rank=2))

    def test_schedule_shorter_than_horizon_rejected(self):
        with pytest.raises(InvalidInputError):
            config_from_dict(config_dict(alpha_schedule=[0.5, 0.5], horizon=3))

    def test_explicit_theta_length_checked(self):
        with pytest.raises(InvalidInputError):
            config_from_dict(config_dict(theta_spec=[1.0, 2.0]))

    def test_round_trip(self, tmp_path):
        cfg = config_from_dict(config_dict())
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert scenarios.load_config(path) == cfg


class TestGenerateFeatures:
    def cfg(self, **overrides):
        base = config_dict(
            k_entities=4, dim=15, private_rows=30, public_rows=30, synthetic_rows=30,
            private_rank=5, public_rank=15, feature_mode="low_rank", horizon=2,
        )
        base.update(overrides)
        return config_from_dict(base)

    def test_full_rank_when_rank_equals_dim(self):
        cfg = config_from_dict(config_dict(private_rows=20))
        x = generate_features(cfg, "private", np.random.default_rng(0), entity=0)
        assert matrix_rank(x.T @ x) == cfg.dim

    def test_rank_one(self):
        cfg = self.cfg(private_rank=1)
        x = generate_features(cfg, "private", np.random.default_rng(0), entity=1)
        assert matrix_rank(x.T @ x) == 1

    def test_gram_rank_matches_config(self):
        cfg = self.cfg()
        for k in range(4):
            x = generate_features(cfg, "private", np.random.default_rng(k), entity=k)
            assert matrix_rank(x.T @ x) == 5

    def test_pooled_gram_full_rank_across_entities(self):
        # 4 entities x rank 5 >= 15: distinct subspaces cover the space
        cfg = self.cfg()
        pooled = sum(
            (lambda x: x.T @ x)(generate_features(cfg, "private", np.random.default_rng(k), entity=k))
            for k in range(4)
        )
        assert matrix_rank(pooled) == 15

    def test_synthetic_shares_private_subspace(self):
        cfg = self.cfg()
        xp = generate_features(cfg, "private", np.random.default_rng(0), entity=2)
        xs = generate_features(cfg, "synthetic", np.random.default_rng(1), entity=2)
        # stacking does not increase rank: same 5-dimensional subspace
        assert matrix_rank(np.vstack([xp, xs])) == 5

    def test_materialize_fixed_synthetic_mode(self):
        cfg = self.cfg()
        sc = scenarios.materialize(cfg)
        assert len(sc.synthetic) == cfg.horizon
        for k in range(4):
            assert sc.synthetic[0][k] is sc.synthetic[1][k]

    def test_materialize_redraw_mode(self):
        cfg = self.cfg(synthetic_feature_mode="redraw_per_generation")
        sc = scenarios.materialize(cfg)
        assert not np.array_equal(sc.synthetic[0][0], sc.synthetic[1][0])


class TestTables:
    def test_fig4_row_structure(self):
        preset = scenarios.get_preset("fig4")
        # shrink for test runtime: 2 generations, same grid
        base = preset.base.replace(
            horizon=2,
            alpha_schedule=(0.0, 0.0),
            beta_schedule=(1.0, 1.0),
        )
        table = experiments.grid_trajectory_table(base, preset.alpha_grid, preset.beta_grid)
        k, gens, cells = 3, 3, 9
        per_gen = k + k + k * k + 1  # mse + rel_efficiency + mspe + dispersion
        assert len(table.records) == cells * gens * per_gen

    def test_efficiency_values_bounded(self):
        preset = scenarios.get_preset("fig3")
        table = experiments.efficiency_table(preset.base, (0.0, 0.3), (1.0,))
        values = [r.value for r in table.records if r.metric == "rel_efficiency"]
        assert values and all(0 < v <= 1.05 for v in values)

    def test_empty_grid_rejected(self):
        preset = scenarios.get_preset("fig3")
        with pytest.raises(InvalidInputError):
            experiments.efficiency_table(preset.base, (), (1.0,))

    def test_csv_no_nan_and_schema(self, tmp_path):
        cfg = config_from_dict(config_dict())
        table = experiments.run_experiment(cfg, tmp_path, fmt="csv")
        with open(tmp_path / "trajectory.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert set(rows[0]) == set(experiments.CSV_COLUMNS)
        for row in rows:
            assert row["value"].lower() != "nan"
            float(row["value"])
            assert row["metric"] in ("mse", "mspe", "rel_efficiency", "dispersion")

    def test_reruns_are_bit_identical(self, tmp_path):
        cfg = config_from_dict(config_dict())
        experiments.run_experiment(cfg, tmp_path / "a", fmt="csv")
        experiments.run_experiment(cfg, tmp_path / "b", fmt="csv")
        a = (tmp_path / "a" / "trajectory.csv").read_bytes()
        b = (tmp_path / "b" / "trajectory.csv").read_bytes()
        assert a == b
        assert b"\r" not in a  # LF endings only

    def test_json_format_same_fields(self, tmp_path):
        cfg = config_from_dict(config_dict())
        experiments.run_experiment(cfg, tmp_path, fmt="json")
        rows = json.loads((tmp_path / "trajectory.json").read_text())
        assert rows and set(rows[0]) == set(experiments.CSV_COLUMNS)

    def test_manifest_contents(self, tmp_path):
        cfg = config_from_dict(config_dict())
        experiments.run_experiment(cfg, tmp_path, fmt="csv")
        manifest = json.loads((tmp_path / "trajectory_manifest.json").read_text())
        assert manifest["tool"] == "cotrain"
        assert manifest["configs"][0]["seed"] == cfg.seed
        assert "wall_clock_seconds" in manifest


class TestCli:
    def write_config(self, tmp_path, **overrides):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config_dict(**overrides)))
        return path

    def test_check_exits_zero(self, tmp_path, capsys):
        path = self.write_config(tmp_path)
        assert cli_main(["check", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "rho" in out

    def test_check_guaranteed_on_proportional_scenario(self, tmp_path, capsys):
        # low-rank private with own-subspace synthetic is not exactly
        # proportional; use a hand-built proportional case through the API
        import cotrain.dynamics as dyn
        from cotrain.workflow import GramSet
        rng = np.random.default_rng(0)
        privs = tuple((lambda x: x.T @ x)(rng.standard_normal((6, 3))) for _ in range(2))
        grams = GramSet(private=privs, public=privs[0] * 0.5, synthetic=privs)
        cert = dyn.certify_convergence(grams, 0.5, 1.0)
        assert cert.guaranteed and cert.rho < 1.0

    def test_limits_diverges_at_alpha_one(self, tmp_path):
        path = self.write_config(tmp_path, alpha_schedule=1.0, k_entities=1)
        rc = cli_main(["limits", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_limits_writes_report(self, tmp_path):
        path = self.write_config(tmp_path)
        rc = cli_main(["limits", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 0
        report = json.loads((tmp_path / "o" / "limits.json").read_text())
        assert report["rho"] < 1.0
        assert report["lyapunov_residual"] < 1e-9

    def test_mc_report(self, tmp_path):
        path = self.write_config(tmp_path)
        rc = cli_main([
            "mc", "--config", str(path), "--reps", "2000", "--out", str(tmp_path / "o"),
        ])
        assert rc == 0
        report = json.loads((tmp_path / "o" / "mc_report.json").read_text())
        assert report["max_abs_z"] < 4.0
        assert report["n_reps"] == 2000

    def test_theory_then_seed_override_changes_output(self, tmp_path):
        path = self.write_config(tmp_path)
        assert cli_main(["theory", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
        assert cli_main([
            "theory", "--config", str(path), "--seed", "99", "--out", str(tmp_path / "b"),
        ]) == 0
        a = (tmp_path / "a" / "trajectory.csv").read_bytes()
        b = (tmp_path / "b" / "trajectory.csv").read_bytes()
        assert a != b

    def test_efficiency_command(self, tmp_path):
        path = self.write_config(tmp_path, horizon=1, alpha_schedule=[0.3], beta_schedule=[0.5])
        rc = cli_main(["efficiency", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 0
        assert (tmp_path / "o" / "efficiency.csv").exists()
        assert (tmp_path / "o" / "efficiency_manifest.json").exists()

    def test_unknown_flag_exits_one(self):
        assert cli_main(["--bogus"]) == 1

    def test_unknown_command_exits_one(self):
        assert cli_main(["frobnicate"]) == 1

    def test_missing_config_exits_one(self, capsys):
        assert cli_main(["theory"]) == 1
        assert "--config" in capsys.readouterr().err

    def test_invalid_json_exits_one(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli_main(["check", "--config", str(bad)]) == 1

    def test_module_entry_point(self, tmp_path):
        path = self.write_config(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "cotrain", "check", "--config", str(path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0


class TestFigurePresets:
    def test_fig5_preset_shape(self):
        preset = scenarios.get_preset("fig5")
        assert preset.base.k_entities == 2
        assert preset.base.dim == 50
        assert preset.base.private_rank == 15
        assert preset.alpha_grid == (0.0, 0.5, 1.0)

    def test_fig3_preset_shape(self):
        preset = scenarios.get_preset("fig3")
        assert preset.base.k_entities == 4
        assert preset.base.dim == 15
        assert preset.base.private_rank == 5
        assert len(preset.alpha_grid) == 20
        assert max(preset.alpha_grid) < 1.0

    def test_unknown_preset(self):
        with pytest.raises(InvalidInputError):
            scenarios.get_preset("fig9")

    def test_figure_command_writes_named_outputs(self, tmp_path):
        # fig5 at reduced horizon via seed override only; full preset runs in
        # the acceptance suite. Use fig4's trajectory kind with the real seed
        # but assert on structure, not values.
        rc = cli_main(["figure", "fig5", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "fig5.csv").exists()
        manifest = json.loads((tmp_path / "fig5_manifest.json").read_text())
        assert manifest["preset"] == "fig5"
        assert manifest["kind"] == "trajectory-grid"
