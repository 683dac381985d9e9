"""End-to-end command-line tests; every stage runs in-process."""

import filecmp
import subprocess
import sys

import pytest

from stabledrop.cli import main
from stabledrop.planner import load_dataset
from stabledrop.scenes import build_scene, load_scene
from stabledrop.score import load_checkpoint


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def scene_file(workdir):
    path = workdir / "table.scene"
    assert main(["scene", "--name", "table", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def dataset_file(workdir):
    path = workdir / "tiny.jsonl"
    assert main(["dataset", "--scenes", "table", "--per-scene", "2",
                 "--seed", "5", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def model_file(workdir, dataset_file):
    path = workdir / "tiny.ckpt"
    assert main(["train", "--data", str(dataset_file), "--leave-out", "shelf",
                 "--seed", "1", "--epochs", "2", "--out", str(path)]) == 0
    return path


class TestScene:
    def test_roundtrip(self, scene_file):
        scene = load_scene(scene_file)
        built = build_scene("table")
        assert scene.name == "table"
        assert len(scene.bodies) == len(built.bodies)
        assert scene.dims == built.dims

    def test_unknown_name_rejected(self, workdir):
        with pytest.raises(SystemExit):
            main(["scene", "--name", "desk", "--out", str(workdir / "x")])


class TestRobustness:
    def test_field_csv_and_svg(self, workdir, scene_file):
        csv = workdir / "field.csv"
        svg = workdir / "field.svg"
        assert main(["robustness", "--scene", str(scene_file), "--points",
                     "64", "--seed", "3", "--out", str(csv),
                     "--svg", str(svg)]) == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == "x,y,z,nx,ny,nz,body_id,robustness"
        assert len(lines) == 65
        assert any(line.endswith(",INF") for line in lines[1:])
        for line in lines[1:]:
            parts = line.split(",")
            assert len(parts) == 8
            [float(v) for v in parts[:6]]
        assert svg.read_text().startswith("<svg")


class TestDataset:
    def test_loadable(self, dataset_file):
        header, records = load_dataset(dataset_file)
        assert len(records) == 2
        assert all(r.scene_name == "table" for r in records)


class TestTrain:
    def test_checkpoint_and_loss_curve(self, workdir, model_file):
        ckpt = load_checkpoint(model_file)
        assert ckpt.meta["epochs"] == 2
        assert ckpt.meta["leave_out"] == "shelf"
        loss_csv = workdir / "tiny.ckpt.loss.csv"
        lines = loss_csv.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) > 1


class TestSample:
    def test_poses_csv_deterministic(self, workdir, scene_file, model_file):
        a = workdir / "poses_a.csv"
        b = workdir / "poses_b.csv"
        argv = ["sample", "--model", str(model_file), "--scene",
                str(scene_file), "--batch", "3", "--steps", "5",
                "--seed", "9"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        lines = a.read_text().splitlines()
        assert lines[0].startswith("x,y,z,c1x")
        assert len(lines) == 4
        assert filecmp.cmp(a, b, shallow=False)


class TestBench:
    def test_report_directory(self, workdir, model_file):
        toml = workdir / "bench.toml"
        toml.write_text(
            "n = 2\nvariations = 1\nsteps = 2\nrepeats = 1\n"
            "time_batch = 1\n[checkpoints]\n"
            f'shelf = "{model_file.name}"\n')
        out = workdir / "reports"
        assert main(["bench", "--config", str(toml), "--out", str(out)]) == 0
        for name in ["table1.csv", "table2.csv", "table3.csv", "table4.csv",
                     "report.md", "field_shelf.svg"]:
            assert (out / name).exists()

    def test_missing_checkpoint_exit_code(self, workdir):
        toml = workdir / "broken.toml"
        toml.write_text('[checkpoints]\ntable = "absent.ckpt"\n')
        assert main(["bench", "--config", str(toml),
                     "--out", str(workdir / "r2")]) == 1


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        out = tmp_path / "t.scene"
        proc = subprocess.run(
            [sys.executable, "-m", "stabledrop", "scene", "--name", "table",
             "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert out.exists()
