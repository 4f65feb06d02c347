import json

import numpy as np
import pytest

from sensorkit import formats
from sensorkit.cli import main
from sensorkit.geometry import ImagePlane, PointCloud
from sensorkit.rangeview import SpinImage


@pytest.fixture
def lidar_config(tmp_path):
    path = tmp_path / "lidar.json"
    path.write_text(json.dumps({
        "lidar": {
            "elevations": list(np.linspace(0.3, -0.3, 8)),
            "azimuth_start": 0.0,
            "azimuth_end": 2 * np.pi,
            "n_columns": 32,
            "max_range": 150.0,
        }
    }))
    return path


@pytest.fixture
def scene_config(tmp_path):
    rng = np.random.default_rng(0)
    statics = [
        {
            "mean": list(rng.uniform(-6, 6, 3) + [0, 0, 12]),
            "scale": list(rng.uniform(0.3, 1.0, 3)),
            "quat": [1.0, 0.0, 0.0, 0.0],
            "opacity": 0.9,
            "color": list(rng.uniform(0, 1, 3)),
        }
        for _ in range(20)
    ]
    path = tmp_path / "scene.json"
    path.write_text(json.dumps({"scene": {
        "timesteps": 3, "background": [0.1, 0.1, 0.1], "static": statics,
    }}))
    return path


@pytest.fixture
def rig_config(tmp_path):
    path = tmp_path / "rig.json"
    path.write_text(json.dumps({"cameras": [{
        "name": "front",
        "model": "pinhole_brown",
        "fx": 40.0, "fy": 40.0, "cx": 16.0, "cy": 16.0,
        "width": 32, "height": 32,
        "pose": {"quat": [0.5, -0.5, 0.5, -0.5], "trans": [0.0, 0.0, 2.0]},
    }]}))
    return path


def write_spin_file(path, rng, calib):
    mask = (rng.uniform(size=(8, 32)) < 0.6).astype(np.float32)
    data = np.zeros((8, 32, 4), dtype=np.float32)
    data[..., 0] = ((0.05 + 0.9 * rng.uniform(size=(8, 32))) * mask).astype(np.float32)
    data[..., 3] = mask
    spin = SpinImage(data)
    formats.write_spin(spin, calib, path)
    return spin


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "sensorkit" in capsys.readouterr().out

    def test_subcommand_help_exits_zero(self, capsys):
        assert main(["convert", "--help"]) == 0
        assert "--direction" in capsys.readouterr().out

    def test_no_subcommand_is_usage_error(self):
        assert main([]) == 1

    def test_missing_seed_is_usage_error(self, capsys):
        assert main(["sample-rig", "--category", "sedan", "--count", "1"]) == 1
        assert "--seed" in capsys.readouterr().err

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_missing_input_file_exits_two(self, tmp_path, lidar_config, capsys):
        code = main([
            "convert", "--direction", "spin-to-cloud",
            "--in", str(tmp_path / "absent.spin"),
            "--out", str(tmp_path / "out.ply"),
            "--config", str(lidar_config),
        ])
        assert code == 2
        assert "absent.spin" in capsys.readouterr().err

    def test_geometry_error_exits_three(self, tmp_path, lidar_config, capsys):
        # Chamfer on an empty cloud is a degenerate-input (numeric) error.
        a = tmp_path / "a.ply"
        b = tmp_path / "b.ply"
        formats.write_ply(PointCloud.empty(), a)
        formats.write_ply(
            PointCloud(np.array([[0.0, 0, 0]]), np.zeros(1), np.zeros(1)), b
        )
        assert main(["metrics", "chamfer", "--a", str(a), "--b", str(b)]) == 3


class TestConvert:
    def test_roundtrip_via_two_invocations(self, tmp_path, lidar_config, capsys):
        rng = np.random.default_rng(1)
        calib = formats.read_config(lidar_config).lidar
        spin = write_spin_file(tmp_path / "in.spin", rng, calib)

        assert main([
            "convert", "--direction", "spin-to-cloud",
            "--in", str(tmp_path / "in.spin"), "--out", str(tmp_path / "mid.ply"),
            "--config", str(lidar_config),
        ]) == 0
        assert main([
            "convert", "--direction", "cloud-to-spin",
            "--in", str(tmp_path / "mid.ply"), "--out", str(tmp_path / "out.spin"),
            "--config", str(lidar_config),
        ]) == 0
        out = capsys.readouterr().out
        assert "points=" in out and "valid_cells=" in out

        loaded, _ = formats.read_spin(tmp_path / "out.spin")
        assert np.array_equal(loaded.validity, spin.validity)
        assert np.abs(loaded.range - spin.range).max() <= 1e-5

    def test_failure_leaves_no_partial_output(self, tmp_path, lidar_config):
        bad = tmp_path / "bad.spin"
        bad.write_bytes(b"SPIN" + b"\x00" * 10)  # truncated header
        out = tmp_path / "out.ply"
        code = main([
            "convert", "--direction", "spin-to-cloud",
            "--in", str(bad), "--out", str(out), "--config", str(lidar_config),
        ])
        assert code == 2
        assert not out.exists()


class TestRenderAndRaymap:
    def test_render_writes_image_and_depth(self, tmp_path, scene_config, rig_config):
        prefix = tmp_path / "shot"
        assert main([
            "render", "--scene", str(scene_config), "--rig", str(rig_config),
            "--time", "0", "--out", str(prefix),
        ]) == 0
        image = formats.read_ppm(f"{prefix}_view00.ppm")
        depth = formats.read_depth(f"{prefix}_view00.dept")
        assert image.data.shape == (32, 32, 3)
        assert depth.shape == (32, 32)

    def test_render_time_out_of_range_exits_three(self, tmp_path, scene_config, rig_config):
        assert main([
            "render", "--scene", str(scene_config), "--rig", str(rig_config),
            "--time", "9", "--out", str(tmp_path / "x"),
        ]) == 3

    def test_raymap_roundtrips(self, tmp_path, rig_config):
        out = tmp_path / "front.raym"
        assert main([
            "raymap", "--rig", str(rig_config), "--target", "0",
            "--reference", "0", "--downsample", "4", "--out", str(out),
        ]) == 0
        raymap = formats.read_raymap(out)
        assert raymap.origins.shape == (8, 8, 3)
        assert np.all(raymap.origins == 0.0)


class TestSampleRig:
    def test_outputs_json_lines(self, capsys):
        assert main(["sample-rig", "--seed", "9", "--category", "sedan",
                     "--count", "3"]) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
        assert len(lines) == 3
        record = json.loads(lines[0])
        assert record["category"] == "sedan"
        assert 2.0 <= record["trans"][0] <= 2.5

    def test_deterministic_given_seed(self, capsys):
        main(["sample-rig", "--seed", "4", "--count", "2"])
        first = capsys.readouterr().out
        main(["sample-rig", "--seed", "4", "--count", "2"])
        assert capsys.readouterr().out == first

    def test_unknown_category(self, capsys):
        assert main(["sample-rig", "--seed", "1", "--category", "hovercraft"]) == 2


class TestMetricsAndGradcheck:
    def test_psnr_metric(self, tmp_path, capsys):
        a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
        formats.write_ppm(ImagePlane.filled(12, 12, 3, 0.25), a)
        formats.write_ppm(ImagePlane.filled(12, 12, 3, 0.25), b)
        assert main(["metrics", "psnr", "--a", str(a), "--b", str(b)]) == 0
        assert "psnr=inf" in capsys.readouterr().out

    def test_ssim_metric(self, tmp_path, capsys):
        a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
        formats.write_ppm(ImagePlane.filled(12, 12, 3, 0.5), a)
        formats.write_ppm(ImagePlane.filled(12, 12, 3, 0.5), b)
        main(["metrics", "ssim", "--a", str(a), "--b", str(b)])
        assert "ssim=1" in capsys.readouterr().out

    def test_chamfer_metric(self, tmp_path, capsys):
        a, b = tmp_path / "a.ply", tmp_path / "b.ply"
        formats.write_ply(PointCloud(np.array([[0.0, 0, 0]]), np.zeros(1), np.zeros(1)), a)
        formats.write_ply(PointCloud(np.array([[3.0, 4, 0]]), np.zeros(1), np.zeros(1)), b)
        main(["metrics", "chamfer", "--a", str(a), "--b", str(b)])
        assert "chamfer=5" in capsys.readouterr().out

    @pytest.mark.parametrize("loss", ["l1", "bce", "kl", "lpips"])
    def test_gradcheck_all_losses(self, loss, capsys):
        assert main(["gradcheck", "--loss", loss, "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert "max_relative_error=" in out
        assert float(out.split("=")[1]) < 1e-4


class TestRolloutCli:
    def make_frames(self, tmp_path, lidar_config, steps=4, views=2):
        rng = np.random.default_rng(2)
        calib = formats.read_config(lidar_config).lidar
        frames = tmp_path / "frames"
        frames.mkdir()
        for t in range(steps):
            formats.write_ppm(
                ImagePlane(rng.uniform(size=(16, 16, 3))), frames / f"dash_{t:03d}.ppm"
            )
            for v in range(views):
                formats.write_ppm(
                    ImagePlane(rng.uniform(size=(16, 16, 3))),
                    frames / f"view{v:02d}_{t:03d}.ppm",
                )
            write_spin_file(frames / f"spin_{t:03d}.spin", rng, calib)
        return frames

    def test_rollout_writes_csv_and_figure(self, tmp_path, lidar_config):
        frames = self.make_frames(tmp_path, lidar_config)
        report = tmp_path / "drift.csv"
        assert main([
            "rollout", "--frames", str(frames), "--predictor", "noise",
            "--horizon", "4", "--seed", "5", "--mode", "inference",
            "--report", str(report), "--config", str(lidar_config),
        ]) == 0
        lines = report.read_text().splitlines()
        assert lines[0] == "step,view,psnr_db,chamfer_m"
        assert len(lines) == 1 + 4 * 2
        assert report.with_suffix(".png").exists()

    def test_identity_predictor_dagger_mode(self, tmp_path, lidar_config):
        frames = self.make_frames(tmp_path, lidar_config, steps=3)
        report = tmp_path / "drift.csv"
        assert main([
            "rollout", "--frames", str(frames), "--predictor", "identity",
            "--horizon", "3", "--seed", "6", "--mode", "dagger",
            "--report", str(report), "--config", str(lidar_config),
        ]) == 0
        assert report.exists()


class TestPairgen:
    def test_small_pairgen_counts(self, tmp_path, scene_config):
        out_dir = tmp_path / "pairs"
        assert main([
            "pairgen", "--scene", str(scene_config), "--rigs", "1",
            "--times", "0", "--seed", "8", "--size", "64",
            "--raymap-downsample", "8", "--out", str(out_dir),
        ]) == 0
        images = sorted(out_dir.glob("*.ppm"))
        raymaps = sorted(out_dir.glob("*.raym"))
        assert len(images) == 9
        assert len(raymaps) == 9
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert len(manifest["entries"]) == 9
        roles = {e["role"] for e in manifest["entries"]}
        assert roles == {"ring", "dashcam"}

    def test_empty_scene_gives_background_images(self, tmp_path):
        scene = tmp_path / "empty.json"
        scene.write_text(json.dumps({"scene": {
            "timesteps": 1, "background": [0.2, 0.4, 0.6], "static": [],
        }}))
        out_dir = tmp_path / "pairs"
        assert main([
            "pairgen", "--scene", str(scene), "--rigs", "1", "--times", "0",
            "--seed", "3", "--size", "32", "--raymap-downsample", "8",
            "--out", str(out_dir),
        ]) == 0
        image = formats.read_ppm(next(iter(sorted(out_dir.glob("*.ppm")))))
        expected = np.round(np.array([0.2, 0.4, 0.6]) * 255) / 255
        assert np.allclose(image.data, expected, atol=1e-12)
