"""Test glvr.py command line"""
import json

import numpy as np
import pytest

import glvr
import storage
from criteria.resample import Logistic
from modules.diffcore import net_forward
from modules.nets import load_checkpoint, save_checkpoint


@pytest.fixture
def model_path(tmp_path, tiny_generator):
    path = tmp_path / "g.bin"
    save_checkpoint(tiny_generator, path)
    return str(path)


def test_parse_recover_example():
    args = glvr.parse_args(["recover", "--model", "g.bin", "--image", "x.glvt",
                            "--criterion", "logistic:2,2", "--iters", "100", "--out", "z.glvt"])
    assert args.criterion == Logistic(2.0, 2.0)
    assert args.iters == 100
    assert args.lr == 0.01
    assert args.handler is glvr.cmd_recover


@pytest.mark.parametrize("argv", [
    [],
    ["recover", "--model", "g.bin", "--image", "x.glvt", "--criterion", "hard:0", "--out", "z"],
    ["recover", "--model", "g.bin", "--image", "x.glvt", "--criterion", "cosine:1", "--out", "z"],
    ["evaluate", "--config", "e.json", "--trials", "0"],
])
def test_usage_errors_exit_two(argv, capsys):
    assert glvr.main(argv) == glvr.EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_recover_dimension_mismatch(tmp_path, model_path, capsys):
    image = tmp_path / "x.glvt"
    storage.write_tensor(image, np.zeros(5))
    code = glvr.main(["recover", "--model", model_path, "--image", str(image),
                      "--iters", "3", "--out", str(tmp_path / "z.glvt")])
    assert code == glvr.EXIT_FAILURE
    assert "module=recovery type=DimensionError" in capsys.readouterr().err
    assert not (tmp_path / "z.glvt").exists()


def test_recover_prints_error_against_known_latent(tmp_path, model_path, tiny_generator, capsys):
    z_true = np.array([0.5, -0.2, 0.1, 0.3])
    storage.write_tensor(tmp_path / "x.glvt", net_forward(tiny_generator, z_true))
    storage.write_tensor(tmp_path / "z_true.glvt", z_true)
    code = glvr.main(["recover", "--model", model_path, "--image", str(tmp_path / "x.glvt"),
                      "--criterion", "truncnorm:2.75", "--iters", "50", "--lr", "0.05",
                      "--out", str(tmp_path / "z.glvt"), "--trace", str(tmp_path / "trace.csv"),
                      "--z-true", str(tmp_path / "z_true.glvt")])
    assert code == glvr.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("criterion=truncnorm:2.75 ")
    assert "error=" in out
    assert storage.read_tensor(tmp_path / "z.glvt").shape == (4,)
    header, rows = storage.read_csv(tmp_path / "trace.csv")
    assert len(rows) == 50


def test_recover_missing_model(tmp_path, capsys):
    storage.write_tensor(tmp_path / "x.glvt", np.zeros(9))
    code = glvr.main(["recover", "--model", str(tmp_path / "absent.bin"),
                      "--image", str(tmp_path / "x.glvt"), "--out", str(tmp_path / "z.glvt")])
    assert code == glvr.EXIT_FAILURE
    assert capsys.readouterr().err.startswith("error: module=")


def run_evaluate(tmp_path, model_path, name):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({
        "model": model_path,
        "criteria": ["disabled", "hard:2.5", "logistic:2,2"],
        "trials": 3,
        "recovery": {"numiter": 20, "lr": 0.05},
    }))
    out_dir = tmp_path / name
    code = glvr.main(["evaluate", "--config", str(config), "--seed", "7", "--jobs", "1",
                      "--out", str(out_dir), "--format", "csv"])
    assert code == glvr.EXIT_OK
    return out_dir


def test_evaluate_writes_results_and_is_reproducible(tmp_path, model_path, capsys):
    first = run_evaluate(tmp_path, model_path, "a")
    table = capsys.readouterr().out
    second = run_evaluate(tmp_path, model_path, "b")
    assert table.splitlines()[0].startswith("criterion,1e-4,")
    assert len(table.splitlines()) == 4
    assert (first / "summary.csv").read_bytes() == (second / "summary.csv").read_bytes()
    assert "most significant wins" in (first / "summary.md").read_text()

    def without_wall_time(path):
        header, rows = storage.read_csv(path)
        return [row[:-1] for row in rows]

    assert without_wall_time(first / "records.csv") == without_wall_time(second / "records.csv")
    assert len(without_wall_time(first / "records.csv")) == 9
    saved = json.loads((first / "experiment.json").read_text())
    assert saved["master_seed"] == 7


def test_interpolate_great_circle(tmp_path, model_path, capsys):
    out_dir = tmp_path / "walk"
    code = glvr.main(["interpolate", "--model", model_path, "--mode", "great_circle",
                      "--steps", "6", "--seed", "3", "--out-dir", str(out_dir)])
    assert code == glvr.EXIT_OK
    assert "images=True" in capsys.readouterr().out
    latents = storage.read_tensor(out_dir / "latents.glvt")
    assert latents.shape == (6, 4)
    np.testing.assert_allclose(np.linalg.norm(latents, axis=1), np.linalg.norm(latents[0]), atol=1e-9)
    assert (out_dir / "frame_grid.pgm").exists()


def test_embed_requires_indices(tmp_path, model_path, capsys):
    out_dir = tmp_path / "embed"
    assert glvr.main(["embed", "--model", model_path, "--out-dir", str(out_dir)]) == glvr.EXIT_FAILURE
    assert "module=cli" in capsys.readouterr().err
    assert glvr.main(["embed", "--model", model_path, "--i", "1", "--j", "4",
                      "--out-dir", str(out_dir)]) == glvr.EXIT_OK
    assert (out_dir / "embed_001_004.glvt").exists()
    assert glvr.main(["embed", "--model", model_path, "--i", "1", "--j", "9",
                      "--out-dir", str(out_dir)]) == glvr.EXIT_FAILURE


def test_gen_data_and_inspect(tmp_path, capsys):
    out = tmp_path / "tiles.glvt"
    assert glvr.main(["gen-data", "--dataset", "tiles", "--side", "4", "--n", "10",
                      "--seed", "2", "--out", str(out)]) == glvr.EXIT_OK
    assert storage.read_tensor(out).shape == (10, 16)
    capsys.readouterr()
    assert glvr.main(["inspect", str(out), "--dump"]) == glvr.EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["type"] == "tensor" and info["shape"] == [10, 16]


def test_train_then_inspect_checkpoint(tmp_path, capsys):
    out = tmp_path / "g.bin"
    code = glvr.main(["train", "--out", str(out), "--steps", "3", "--batch-size", "8",
                      "--seed", "1", "--history", str(tmp_path / "loss.csv")])
    assert code == glvr.EXIT_OK
    text = capsys.readouterr().out
    assert "d_loss=" in text and "modes_covered=" in text
    assert load_checkpoint(out).input_dim == 16
    assert glvr.main(["inspect", str(out), "--dump"]) == glvr.EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["kind"] == "generator"
    assert info["layer_dims"] == [16, 64, 128, 2]


def test_recover_rejects_malformed_pgm_header(tmp_path, model_path, capsys):
    image = tmp_path / "x.pgm"
    image.write_bytes(b"P5\n3 three\n255\n" + bytes(9))
    code = glvr.main(["recover", "--model", model_path, "--image", str(image),
                      "--iters", "3", "--out", str(tmp_path / "z.glvt")])
    assert code == glvr.EXIT_FAILURE
    assert capsys.readouterr().err.startswith("error: module=storage type=ValidationError")


def test_train_rejects_string_steps(tmp_path, capsys):
    config = tmp_path / "train.json"
    config.write_text(json.dumps({"steps": "10"}))
    code = glvr.main(["train", "--config", str(config), "--out", str(tmp_path / "g.bin")])
    assert code == glvr.EXIT_FAILURE
    assert capsys.readouterr().err.startswith("error: module=")
    assert not (tmp_path / "g.bin").exists()


def test_evaluate_rejects_string_numiter(tmp_path, model_path, capsys):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"model": model_path, "recovery": {"numiter": "5"}}))
    code = glvr.main(["evaluate", "--config", str(config), "--out", str(tmp_path / "out")])
    assert code == glvr.EXIT_FAILURE
    err = capsys.readouterr().err
    assert err.startswith("error: module=")
    assert "type=ConfigError" in err
