import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cli import main, parse_axes, parse_seeds
from src.config.experiment import ExperimentConfig, build_config, parse_config, read_config_text
from src.data import load_idx, make_two_moons
from src.errors import CheckpointError, ConfigError, NonFiniteError
from src.harness import (
    METRICS_COLUMNS,
    build_data,
    build_model_spec,
    data_seed,
    default_run_dir,
    evaluate_run,
    plan_grid,
    read_metrics,
    records_frame,
    run_experiment,
    run_grid,
    run_sweep,
    smooth_metrics,
)
from src.harness import runner
from src.harness.sweep import MEANS_FILE, SWEEP_FILE
from src.trainers import read_checkpoint_meta

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestExperimentConfig:
    def test_defaults(self):
        cfg = build_config({})
        assert cfg.algorithm == "mean_teacher"
        assert (cfg.lr, cfg.adam_beta1, cfg.adam_epsilon) == (0.003, 0.9, 1e-8)
        assert (cfg.labeled_per_batch, cfg.unlabeled_per_batch) == (1, 99)
        assert (cfg.ema_decay_before, cfg.ema_decay_after) == (0.99, 0.999)
        assert cfg.resolved_phase_switch == cfg.rampup_steps

    def test_out_of_range_value(self):
        with pytest.raises(ConfigError) as info:
            build_config({"ema_decay_after": 1.5})
        assert any("ema_decay_after" in v for v in info.value.violations)

    def test_temporal_ensembling_cannot_stream(self):
        with pytest.raises(ConfigError) as info:
            build_config({"algorithm": "temporal_ensembling", "streaming": True, "extra_unlabeled": 500})
        assert "once per epoch" in str(info.value)

    def test_every_violation_is_reported(self):
        with pytest.raises(ConfigError) as info:
            build_config({"colour": "red", "lr": -1.0, "ema_decay_after": 1.5})
        assert len(info.value.violations) == 3
        assert "colour: unknown key" in info.value.violations

        with pytest.raises(ConfigError) as info:
            build_config({"model": "convnet", "train_size": 101})
        text = str(info.value)
        assert "model=convnet needs an image dataset" in text
        assert "even train_size" in text

    def test_overrides_win_over_file(self, temp_dir):
        path = temp_dir / "run.cfg"
        path.write_text("algorithm=pi\nlr=0.01  # faster\n\nema_decay_after=0.99\n")
        cfg = parse_config(path, ["--lr=0.002", "--ema-decay=0.95"])
        assert cfg.algorithm == "pi"
        assert cfg.lr == 0.002
        assert (cfg.ema_decay_before, cfg.ema_decay_after) == (0.95, 0.95)

    def test_text_round_trip(self, tiny_config):
        cfg = tiny_config(phase_switch_step=5, labels_per_class=None, sampling="mixed")
        again = build_config(read_config_text(cfg.to_text()))
        assert again == cfg

    def test_file_errors(self, temp_dir):
        path = temp_dir / "bad.cfg"
        path.write_text("lr=0.1\nlr=0.2\nnot a pair\n")
        with pytest.raises(ConfigError) as info:
            parse_config(path)
        assert len(info.value.violations) == 2
        with pytest.raises(ConfigError):
            parse_config(temp_dir / "missing.cfg")

    def test_replace_with_shorthand(self, tiny_config):
        cfg = tiny_config(ema_decay_before=0.9)
        changed = cfg.replace(ema_decay=0.5)
        assert (changed.ema_decay_before, changed.ema_decay_after) == (0.5, 0.5)

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
    def test_presets_parse(self, name):
        assert isinstance(parse_config(CONFIGS / name), ExperimentConfig)


class TestExperimentData:
    def test_normalization_uses_training_statistics(self, tiny_config):
        data = build_data(tiny_config())
        raw_train = make_two_moons(100, 0.1, data_seed(0, "train"))
        raw_test = make_two_moons(100, 0.1, data_seed(0, "test"))
        assert np.allclose(data.train.examples.mean(axis=0), 0.0, atol=1e-10)
        assert np.allclose(data.transform.mean, raw_train.examples.mean(axis=0))
        assert np.allclose(data.test.examples, (raw_test.examples - data.transform.mean) / data.transform.scale)
        assert data.split.labeled_count == 6

    def test_extra_pool_and_ids(self, tiny_config):
        data = build_data(tiny_config(extra_unlabeled=30))
        assert data.split.unlabeled_count == 94 + 30
        assert data.n_ids == 130

    def test_all_labeled(self, tiny_config):
        data = build_data(tiny_config(labels_per_class=None))
        assert data.split.labeled_count == 100 and data.split.unlabeled_count == 0

    def test_float_width(self, tiny_config):
        data = build_data(tiny_config(float_width=32))
        assert data.train.examples.dtype == np.float32

    def test_model_spec_follows_config(self, tiny_config):
        cfg = tiny_config(dual_head=True)
        spec = build_model_spec(cfg, (2,), 2)
        assert spec.head_count == 2
        assert spec.layers[0].kind == "gaussian-input-noise"


class TestRunner:
    def test_run_directory(self, tiny_config, run_root):
        cfg = tiny_config()
        result = run_experiment(cfg)
        assert result.run_dir == default_run_dir(cfg)
        assert result.run_dir.parent == run_root
        for name in ("config.cfg", "model.json", "metrics.csv", "timings.csv", "summary.json"):
            assert (result.run_dir / name).exists(), name
        assert read_checkpoint_meta(result.run_dir / "checkpoints" / "latest.npz")["step"] == 20

        metrics = pd.read_csv(result.run_dir / "metrics.csv")
        assert tuple(metrics.columns) == METRICS_COLUMNS
        assert metrics["step"].tolist() == [10, 20]
        summary = json.loads((result.run_dir / "summary.json").read_text())
        assert summary["status"] == "completed"
        assert summary["headline_error"] == pytest.approx(metrics["teacher_test_error"].iloc[-1])
        assert 0.0 <= result.headline_error <= 1.0

    def test_same_seed_same_metrics_bytes(self, tiny_config, temp_dir):
        cfg = tiny_config()
        a = run_experiment(cfg, run_dir=temp_dir / "a")
        b = run_experiment(cfg, run_dir=temp_dir / "b")
        assert (a.run_dir / "metrics.csv").read_bytes() == (b.run_dir / "metrics.csv").read_bytes()

    @pytest.mark.parametrize("algorithm", ["mean_teacher", "temporal_ensembling"])
    def test_resume_matches_uninterrupted_run(self, tiny_config, temp_dir, algorithm):
        straight = run_experiment(tiny_config(algorithm=algorithm), run_dir=temp_dir / "straight")
        run_experiment(tiny_config(algorithm=algorithm, total_steps=10), run_dir=temp_dir / "resumed")
        resumed = run_experiment(tiny_config(algorithm=algorithm), run_dir=temp_dir / "resumed", resume=True)
        assert (resumed.run_dir / "metrics.csv").read_bytes() == (straight.run_dir / "metrics.csv").read_bytes()

    def test_resume_needs_checkpoint(self, tiny_config, temp_dir):
        with pytest.raises(CheckpointError, match="nothing to resume"):
            run_experiment(tiny_config(), run_dir=temp_dir / "empty", resume=True)

    def test_non_finite_cost_keeps_last_checkpoint(self, tiny_config, temp_dir, monkeypatch):
        real_step = runner.train_step

        def failing_step(state, batch, cfg):
            if state.step == 14:
                raise NonFiniteError("total cost is not finite")
            return real_step(state, batch, cfg)

        monkeypatch.setattr(runner, "train_step", failing_step)
        with pytest.raises(NonFiniteError):
            run_experiment(tiny_config(), run_dir=temp_dir / "run")

        summary = json.loads((temp_dir / "run" / "summary.json").read_text())
        assert summary["status"] == "non_finite"
        assert summary["step"] == 14
        assert read_checkpoint_meta(temp_dir / "run" / "checkpoints" / "latest.npz")["step"] == 10
        assert [record.step for record in read_metrics(temp_dir / "run" / "metrics.csv")] == [10]

    def test_evaluate_run_matches_final_record(self, tiny_config, temp_dir):
        result = run_experiment(tiny_config(), run_dir=temp_dir / "run")
        last = read_metrics(result.run_dir / "metrics.csv")[-1]
        teacher = evaluate_run(result.run_dir)
        student = evaluate_run(result.run_dir, target="student")
        assert teacher["error_rate"] == last.teacher_test_error
        assert student["error_rate"] == last.student_test_error
        assert teacher["step"] == 20

    def test_smoothing_is_a_trailing_mean(self, tiny_config, temp_dir):
        result = run_experiment(tiny_config(total_steps=40, eval_every=10), run_dir=temp_dir / "run")
        df = records_frame(read_metrics(result.run_dir / "metrics.csv"))
        smoothed = smooth_metrics(df, window=2)
        assert smoothed["step"].tolist() == df["step"].tolist()
        expected = (df["total_cost"].iloc[2] + df["total_cost"].iloc[3]) / 2
        assert smoothed["total_cost"].iloc[3] == pytest.approx(expected)


class TestSweep:
    def test_grid_rows_and_means(self, tiny_config, temp_dir):
        df = run_grid(tiny_config(), {"consistency_weight": ["1", "10"]}, [0, 1], out_dir=temp_dir, workers=2)
        assert len(df) == 4
        assert df["consistency_weight"].tolist() == ["1", "1", "10", "10"]
        assert df["seed"].tolist() == [0, 1, 0, 1]
        assert (df["status"] == "completed").all()
        means = pd.read_csv(temp_dir / MEANS_FILE)
        assert len(means) == 2 and means["runs"].tolist() == [2, 2]
        assert "teacher_test_error_mean" in means.columns
        assert (temp_dir / SWEEP_FILE).exists()

    def test_sweep_is_deterministic_across_worker_counts(self, tiny_config, temp_dir):
        serial = run_sweep(tiny_config(), "algorithm", ["pi", "mean_teacher"], [3], out_dir=temp_dir / "a", workers=1)
        parallel = run_sweep(tiny_config(), "algorithm", ["pi", "mean_teacher"], [3], out_dir=temp_dir / "b",
                             workers=2)
        columns = ["algorithm", "seed", "status", "headline_error"]
        pd.testing.assert_frame_equal(serial[columns], parallel[columns])

    def test_rejects_unsweepable_keys_before_running(self, tiny_config, temp_dir):
        with pytest.raises(ConfigError) as info:
            plan_grid(tiny_config(), {"total_steps": [10], "lr": [0.1]}, [0], temp_dir)
        assert "total_steps: not a sweepable key" in str(info.value)
        with pytest.raises(ConfigError):
            run_grid(tiny_config(), {"ema_decay": ["0.5", "1.5"]}, [0], out_dir=temp_dir / "sweep")
        assert not (temp_dir / "sweep").exists()


class TestCli:
    def test_axis_and_seed_parsing(self):
        assert parse_axes(["lr=0.1,0.2", "tau=1"]) == {"lr": ["0.1", "0.2"], "tau": ["1"]}
        assert parse_seeds("0-3") == [0, 1, 2, 3]
        assert parse_seeds("4,7") == [4, 7]
        with pytest.raises(ConfigError):
            parse_seeds("x")

    def test_config_error_exit_code(self, run_root, capsys):
        assert main(["train", "--ema_decay=1.5"]) == 2
        report = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert report["error"] == "config"

    def test_train_then_eval(self, tiny_config, temp_dir, capsys):
        path = temp_dir / "tiny.cfg"
        path.write_text(tiny_config().to_text())
        run_dir = temp_dir / "run"
        assert main(["train", "--config", str(path), "--run-dir", str(run_dir), "--seed=2"]) == 0
        trained = json.loads(capsys.readouterr().out)
        assert trained["seed"] == 2 and trained["status"] == "completed"

        assert main(["eval", "--run-dir", str(run_dir)]) == 0
        evaluated = json.loads(capsys.readouterr().out)
        assert evaluated["error_rate"] == trained["headline_error"]

    def test_resume_needs_run_dir(self, run_root):
        assert main(["train", "--resume"]) == 2

    def test_export_data(self, temp_dir, capsys):
        out = temp_dir / "glyphs"
        assert main(["export-data", "--n", "30", "--test-n", "20", "--out", str(out)]) == 0
        ds = load_idx(out / "train-images.idx", out / "train-labels.idx")
        assert ds.examples.shape == (30, 8, 8, 1)
        assert len(load_idx(out / "test-images.idx")) == 20

    def test_status(self, run_root, capsys):
        assert main(["status"]) == 0
        status = json.loads(capsys.readouterr().out)
        assert status["run_root"] == str(run_root.resolve())


def mean_error(cfg, seeds, out_dir):
    df = run_grid(cfg, {"algorithm": [cfg.algorithm]}, seeds, out_dir=out_dir)
    assert (df["status"] == "completed").all()
    return float(df["headline_error"].mean())


@pytest.mark.slow
class TestDirectionalExperiments:
    """Desk-scale versions of the semi-supervised orderings; run with --runslow"""

    seeds = list(range(10))

    def two_moons(self, name, **changes):
        values = {"train_size": 1006, "total_steps": 3000, "eval_every": 500, "checkpoint_every": 3000,
                  **changes}
        return parse_config(CONFIGS / name, {k: str(v) for k, v in values.items()})

    def test_mean_teacher_beats_supervised_and_pi(self, temp_dir):
        supervised = mean_error(self.two_moons("two_moons_supervised.cfg"), self.seeds, temp_dir / "sup")
        pi = mean_error(self.two_moons("two_moons_pi.cfg"), self.seeds, temp_dir / "pi")
        mean_teacher = mean_error(self.two_moons("two_moons_mt.cfg"), self.seeds, temp_dir / "mt")
        assert mean_teacher <= supervised - 0.05
        assert mean_teacher <= pi

    def test_extra_unlabeled_does_not_hurt(self, temp_dir):
        base = mean_error(self.two_moons("two_moons_mt.cfg"), self.seeds, temp_dir / "base")
        extra = mean_error(self.two_moons("two_moons_mt.cfg", extra_unlabeled=5000), self.seeds, temp_dir / "extra")
        assert extra <= base

    def test_glyph_ordering_and_teacher_advantage(self, temp_dir):
        seeds = list(range(5))
        overrides = {"total_steps": "6000", "eval_every": "1000", "checkpoint_every": "6000"}
        results = {}
        for algorithm in ("supervised", "pi", "mean_teacher"):
            cfg = parse_config(CONFIGS / "glyphs_mt.cfg", {**overrides, "algorithm": algorithm})
            df = run_grid(cfg, {"algorithm": [algorithm]}, seeds, out_dir=temp_dir / algorithm)
            results[algorithm] = df
        errors = {name: df["headline_error"].mean() for name, df in results.items()}
        assert errors["supervised"] > errors["pi"] >= errors["mean_teacher"]
        mt = results["mean_teacher"]
        assert mt["teacher_test_error"].mean() <= mt["student_test_error"].mean()
