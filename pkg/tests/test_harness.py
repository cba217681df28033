"""Dataset generation, training loop, evaluation, ablation and the CLI."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
import torch

from gridcast import cli
from gridcast.ablation import ROWS, run_ablation
from gridcast.config import (
    AblationSwitches,
    GeometryConfig,
    OptimConfig,
    RunConfig,
    config_from_dict,
    paper_scale_config,
)
from gridcast.dataset import (
    collate,
    generate_dataset,
    load_split,
    sample_set_for,
    scene_seeds,
    window_times,
)
from gridcast.losses import LossWeights
from gridcast.model import BackboneConfig, GridcastModel
from gridcast.training import (
    TrainingDiverged,
    compute_losses,
    load_checkpoint,
    run_eval,
    run_training,
    save_checkpoint,
)
from gridcast.world import SensorModel, WorldConfig


def tiny_config(out_dir, seed=0, epochs=2) -> RunConfig:
    cfg = RunConfig()
    cfg.world = WorldConfig(extent_m=16.0, duration=4.0, n_vehicles=2,
                            n_pedestrians=1, n_cyclists=0, n_static_shapes=1)
    cfg.geometry = GeometryConfig(cells=32, resolution=0.5)
    cfg.sensor = SensorModel(max_range=12.0, ray_count=512, state_noise=0.02,
                             dropout_rate=0.02, velocity_noise=0.1)
    cfg.backbone = BackboneConfig(encoder_channels=(8, 16), hidden_channels=16,
                                  recurrent_depth=1, gru_depth=1, grid_size=32)
    cfg.optim = OptimConfig(learning_rate=1e-3, weight_decay=3e-7, epochs=epochs,
                            batch_size=8)
    cfg.n_scenes = 3
    cfg.train_fraction = 0.67
    cfg.seed = seed
    cfg.out_dir = str(out_dir)
    return cfg


def dir_hashes(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()).hexdigest()
    return out


def states_equal(a: dict, b: dict) -> bool:
    return set(a) == set(b) and all(torch.equal(a[k], b[k]) for k in a)


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        cfg = tiny_config(tmp_path)
        path = tmp_path / "config.json"
        cfg.to_json(path)
        loaded = RunConfig.from_json(path)
        assert loaded.to_json() == cfg.to_json()
        assert loaded.world.vehicle_speed == cfg.world.vehicle_speed

    def test_paper_preset_values(self):
        cfg = paper_scale_config()
        assert cfg.geometry.cells == 240
        assert cfg.geometry.resolution == 0.25
        assert cfg.backbone.hidden_channels == 128
        assert cfg.backbone.recurrent_depth == 4
        assert cfg.optim.learning_rate == pytest.approx(3e-4)
        assert cfg.optim.weight_decay == pytest.approx(3e-7)
        assert cfg.optim.epochs == 20
        assert cfg.optim.batch_size == 18
        assert cfg.num_history == 2 and cfg.num_future == 5
        assert cfg.step_seconds == 0.5
        assert LossWeights().flow == 10.0

    def test_invalid_switch_combination_rejected(self, tmp_path):
        cfg = tiny_config(tmp_path)
        with pytest.raises(ValueError, match="detection and flow"):
            cfg.ablation = AblationSwitches(enable_det=False,
                                            enable_warped_losses=True)
            cfg.__post_init__()

    def test_desk_default_window_count(self):
        cfg = RunConfig()
        train_seeds, val_seeds = scene_seeds(cfg)
        assert len(train_seeds) == 52 and len(val_seeds) == 13
        assert set(train_seeds).isdisjoint(val_seeds)
        assert len(train_seeds) * len(window_times(cfg)) >= 500


class TestGenerateDataset:
    def test_layout_and_counts(self, tmp_path):
        cfg = tiny_config(tmp_path / "data")
        out = generate_dataset(cfg)
        assert (out / "config.json").exists()
        train_scenes = sorted((out / "train").glob("scene_*"))
        val_scenes = sorted((out / "val").glob("scene_*"))
        assert len(train_scenes) == 2 and len(val_scenes) == 1
        manifest = json.loads((train_scenes[0] / "manifest.json").read_text())
        assert manifest["channels"] == ["unk", "stat", "dyn", "vx", "vy", "veh"]
        assert manifest["timestep"] == 0.5
        assert manifest["frame_count"] == 9  # 4 s at 0.5 s steps

    def test_regeneration_byte_identical(self, tmp_path):
        cfg = tiny_config("unused")
        generate_dataset(cfg, out_dir=tmp_path / "a")
        generate_dataset(cfg, out_dir=tmp_path / "b")
        hashes_a = dir_hashes(tmp_path / "a")
        hashes_b = dir_hashes(tmp_path / "b")
        assert hashes_a == hashes_b

    def test_load_split_round_trip(self, tmp_path):
        cfg = tiny_config(tmp_path / "data")
        out = generate_dataset(cfg)
        train = load_split(out, "train", cfg)
        assert len(train) == 2 * len(window_times(cfg))
        sample = train.build(0)
        assert len(sample.history) == 3
        direct = sample_set_for(cfg, scene_seeds(cfg)[0]).build(0)
        assert np.array_equal(sample.history[0].channels, direct.history[0].channels)

    def test_explicit_seed_list(self, tmp_path):
        cfg = tiny_config(tmp_path / "data")
        out = generate_dataset(cfg, seeds=[5, 6, 7])
        train_index = json.loads((out / "train" / "index.json").read_text())
        val_index = json.loads((out / "val" / "index.json").read_text())
        assert train_index["seeds"] == [5, 6]
        assert val_index["seeds"] == [7]


class TestLossGating:
    def make_result_and_batch(self, cfg):
        torch.manual_seed(0)
        samples = sample_set_for(cfg, scene_seeds(cfg)[0][:1]).materialize()[:2]
        batch = collate(samples)
        model = GridcastModel(cfg.backbone)
        return model(batch, mode="train"), batch

    def test_pred_only_row_terms(self, tmp_path):
        cfg = tiny_config(tmp_path)
        cfg.ablation = ROWS["pred_only"]
        result, batch = self.make_result_and_batch(cfg)
        report = compute_losses(result, batch, cfg)
        assert set(report.terms()) == {"veh", "flow", "kl"}

    def test_full_row_terms(self, tmp_path):
        cfg = tiny_config(tmp_path)
        result, batch = self.make_result_and_batch(cfg)
        report = compute_losses(result, batch, cfg)
        assert set(report.terms()) == {"det", "veh", "flow", "kl", "unk", "stat",
                                       "dyn", "w_veh", "w_dyn"}

    def test_warped_veh_only_when_ogm_disabled(self, tmp_path):
        cfg = tiny_config(tmp_path)
        cfg.ablation = ROWS["det_warped_veh"]
        result, batch = self.make_result_and_batch(cfg)
        report = compute_losses(result, batch, cfg)
        assert "w_veh" in report.terms() and "w_dyn" not in report.terms()


class TestTraining:
    def test_smoke_and_logs(self, tmp_path):
        cfg = tiny_config(tmp_path / "run")
        result = run_training(cfg)
        assert result.checkpoint.exists()
        lines = [json.loads(l) for l in result.log_path.read_text().splitlines()]
        assert len(lines) == result.steps
        assert all(np.isfinite(l["total"]) for l in lines)
        assert {"det", "veh", "flow", "kl", "unk", "stat", "dyn", "w_veh",
                "w_dyn", "total"} <= set(lines[-1])

    def test_deterministic_rerun(self, tmp_path):
        result_a = run_training(tiny_config(tmp_path / "a", seed=3))
        result_b = run_training(tiny_config(tmp_path / "b", seed=3))
        model_a, _, _ = load_checkpoint(result_a.checkpoint)
        model_b, _, _ = load_checkpoint(result_b.checkpoint)
        assert states_equal(model_a.state_dict(), model_b.state_dict())

    def test_resume_matches_uninterrupted(self, tmp_path):
        straight = run_training(tiny_config(tmp_path / "full", seed=1))
        part = run_training(tiny_config(tmp_path / "part", seed=1), max_steps=1)
        resumed = run_training(tiny_config(tmp_path / "part2", seed=1),
                               resume_from=Path(part.checkpoint).parent
                               / "checkpoint_last.pt")
        model_a, _, _ = load_checkpoint(straight.checkpoint)
        model_b, _, _ = load_checkpoint(resumed.checkpoint)
        assert states_equal(model_a.state_dict(), model_b.state_dict())

    def test_desk_scale_smoke_budget(self, tmp_path):
        # 32 desk-scale samples for 2 epochs must train well inside the CI
        # budget (the bound is generous; one core handles this in seconds).
        import time

        cfg = RunConfig()
        cfg.n_scenes = 5
        cfg.train_fraction = 0.8
        cfg.optim = OptimConfig(learning_rate=1e-3, weight_decay=3e-7, epochs=2,
                                batch_size=8)
        cfg.out_dir = str(tmp_path / "run")
        t0 = time.monotonic()
        train_seeds, _ = scene_seeds(cfg)
        samples = sample_set_for(cfg, train_seeds).materialize()[:32]
        assert len(samples) == 32
        torch.manual_seed(cfg.seed)
        model = GridcastModel(cfg.backbone)
        opt = torch.optim.AdamW(model.parameters(), lr=cfg.optim.learning_rate,
                                weight_decay=cfg.optim.weight_decay)
        for _ in range(cfg.optim.epochs):
            for lo in range(0, 32, cfg.optim.batch_size):
                batch = collate(samples[lo:lo + cfg.optim.batch_size])
                result = model(batch, mode="train")
                report = compute_losses(result, batch, cfg)
                opt.zero_grad()
                report.total.backward()
                opt.step()
        assert time.monotonic() - t0 < 900.0

    def test_divergence_aborts_with_checkpoint(self, tmp_path):
        cfg = tiny_config(tmp_path / "run")
        cfg.optim = OptimConfig(learning_rate=1e18, weight_decay=0.0, epochs=50,
                                batch_size=8)
        with pytest.raises(TrainingDiverged):
            run_training(cfg)
        assert (tmp_path / "run" / "checkpoint_abort.pt").exists()

    def test_checkpoint_config_mismatch_rejected(self, tmp_path):
        cfg = tiny_config(tmp_path / "run", epochs=1)
        result = run_training(cfg)
        other = tiny_config(tmp_path / "other", epochs=1)
        other.optim.learning_rate = 5e-4
        with pytest.raises(ValueError, match="different configuration"):
            run_training(other, resume_from=result.checkpoint)


class TestEval:
    def test_eval_deterministic(self, tmp_path):
        cfg = tiny_config(tmp_path / "run", epochs=1)
        result = run_training(cfg)
        a = run_eval(result.checkpoint, out_dir=tmp_path / "eval_a")
        b = run_eval(result.checkpoint, out_dir=tmp_path / "eval_b")
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(
            b.to_dict(), sort_keys=True)
        assert (tmp_path / "eval_a" / "report.json").exists()
        assert (tmp_path / "eval_a" / "per_step.csv").exists()
        assert (tmp_path / "eval_a" / "recall_curves.png").exists()

    def test_untrained_model_near_chance(self, tmp_path):
        cfg = tiny_config(tmp_path / "run")
        torch.manual_seed(cfg.seed)
        model = GridcastModel(cfg.backbone)
        path = save_checkpoint(tmp_path / "run" / "init.pt", model, None, cfg, 0, 0)
        report = run_eval(path)
        assert report.horizon["veh_soft_iou"] < 0.1

    def test_report_schema_complete(self, tmp_path):
        cfg = tiny_config(tmp_path / "run", epochs=1)
        result = run_training(cfg)
        report = run_eval(result.checkpoint)
        for name in ("veh_soft_iou", "veh_soft_recall", "veh_soft_recall_dynamic",
                     "flow_epe", "mse_unk", "mse_stat", "mse_dyn",
                     "warped_veh_weighted_iou", "warped_veh_iou", "veh_iou",
                     "dyn_recall_ped", "warped_dyn_recall_ped"):
            assert name in report.horizon, name
        assert all(len(v) == cfg.num_future for v in report.per_step.values())


class TestAblation:
    def test_two_row_study(self, tmp_path):
        cfg = tiny_config(tmp_path / "study", epochs=1)
        rows = {"pred_only": ROWS["pred_only"], "full": ROWS["full"]}
        comparison = run_ablation(cfg, rows=rows, out_dir=tmp_path / "study",
                                  max_steps=1)
        assert set(comparison["rows"]) == {"pred_only", "full"}
        assert (tmp_path / "study" / "ablation.json").exists()
        pred_only = comparison["rows"]["pred_only"]["horizon"]
        assert pred_only["mse_unk"] is None  # occupancy head disabled
        assert pred_only["warped_veh_recall"] is None
        assert comparison["rows"]["full"]["horizon"]["mse_unk"] is not None
        for metric, ranks in comparison["rankings"].items():
            assert "best" in ranks and "second" in ranks

    def test_invalid_row_rejected(self, tmp_path):
        cfg = tiny_config(tmp_path / "study")
        bad = {"broken": AblationSwitches(enable_det=False,
                                          enable_warped_losses=True)}
        with pytest.raises(ValueError, match="detection and flow"):
            run_ablation(cfg, rows=bad, out_dir=tmp_path / "study")


class TestCli:
    def test_generate_and_train_and_eval(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path / "run", epochs=1)
        cfg_path = tmp_path / "config.json"
        cfg.to_json(cfg_path)
        assert cli.main(["generate", "--config", str(cfg_path),
                         "--out", str(tmp_path / "data")]) == 0
        assert cli.main(["train", "--config", str(cfg_path),
                         "--data", str(tmp_path / "data"),
                         "--out", str(tmp_path / "run"), "--max-steps", "1"]) == 0
        checkpoint = tmp_path / "run" / "checkpoint_final.pt"
        assert cli.main(["eval", "--checkpoint", str(checkpoint),
                         "--data", str(tmp_path / "data"),
                         "--out", str(tmp_path / "eval")]) == 0
        assert (tmp_path / "eval" / "report.json").exists()
        assert cli.main(["report", "--eval-dir", str(tmp_path / "eval")]) == 0
        capsys.readouterr()

    def test_generate_seed_range(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path / "run")
        cfg_path = tmp_path / "config.json"
        cfg.to_json(cfg_path)
        assert cli.main(["generate", "--config", str(cfg_path), "--seeds", "4..6",
                         "--out", str(tmp_path / "data")]) == 0
        index = json.loads((tmp_path / "data" / "train" / "index.json").read_text())
        assert index["seeds"] == [4, 5]
        capsys.readouterr()

    def test_warp_round_trip(self, tmp_path, capsys):
        from gridcast import container
        from gridcast.geometry import GridGeometry, Pose

        geom = GridGeometry(8, 8, 0.5, Pose(0, 0, 0))
        flows = [np.stack([np.full((8, 8), -1.0, dtype=np.float32),
                           np.zeros((8, 8), dtype=np.float32)]) for _ in range(3)]
        container.write_scene(tmp_path / "flows", geom, ["fx", "fy"], 0.5,
                              [0.5, 1.0, 1.5], [Pose(0, 0, 0)] * 3, flows)
        seed = np.zeros((8, 8), dtype=np.float32)
        seed[4, 2] = 1.0
        np.save(tmp_path / "seed.npy", seed)
        assert cli.main(["warp", "--seed-grid", str(tmp_path / "seed.npy"),
                         "--flows", str(tmp_path / "flows"), "--mode", "nearest",
                         "--out", str(tmp_path / "warped")]) == 0
        scene = container.read_scene(tmp_path / "warped")
        assert scene.channels == ["warped"]
        assert scene.data[2][0, 4, 5] == 1.0  # moved three columns right
        capsys.readouterr()

    def test_error_exit_code_and_record(self, tmp_path, capsys):
        assert cli.main(["eval", "--checkpoint", str(tmp_path / "missing.pt")]) == 1
        err = capsys.readouterr().err
        record = json.loads(err.strip().splitlines()[-1])
        assert "error" in record and "message" in record

    def test_config_round_trip_through_dict(self, tmp_path):
        cfg = tiny_config(tmp_path)
        rebuilt = config_from_dict(json.loads(cfg.to_json()))
        assert rebuilt.to_json() == cfg.to_json()
