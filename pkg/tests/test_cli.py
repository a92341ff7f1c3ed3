import json

import numpy as np
import numpy.testing as npt
import pytest

from ttdensity.cli import main
from ttdensity.data import load_csv, save_csv
from ttdensity.density import DensityModel
from ttdensity.metrics import cross_entropy, sliced_tv
from ttdensity.sampler import sample


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    """A small trained model reused across CLI tests."""
    path = tmp_path_factory.mktemp("cli") / "moons.json"
    code = main(["train", "--data", "toy:two_moons", "--toy-n", "4000",
                 "--rank", "4", "--basis-size", "16", "--iters", "40",
                 "--seed", "0", "--out", str(path)])
    assert code == 0
    return path


def test_train_writes_model_log_and_figure(trained_model):
    model = DensityModel.load(trained_model)
    assert model.d == 2
    log = trained_model.with_suffix(".json.log.csv")
    assert log.exists()
    lines = log.read_text().splitlines()
    assert lines[0] == "iter,train_loss,val_loss,seconds"
    assert len(lines) > 1
    figure = trained_model.with_suffix(".json.loss.png")
    assert figure.exists() and figure.stat().st_size > 0
    manifest = json.loads(trained_model.with_suffix(".json.data.json").read_text())
    assert manifest["n"] == 4000 and manifest["d"] == 2 and manifest["seed"] == 0
    assert len(manifest["bounds"]) == 2


def test_train_missing_data_path_exits_nonzero(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "m.json"), "--iters", "1"])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_train_rank_zero_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["train", "--data", "toy:two_moons", "--rank", "0",
              "--out", str(tmp_path / "m.json")])
    assert err.value.code == 1


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 1


def test_sample_deterministic_and_reloadable(trained_model, tmp_path):
    out1 = tmp_path / "s1.csv"
    out2 = tmp_path / "s2.csv"
    assert main(["sample", "--model", str(trained_model), "-n", "200",
                 "--seed", "3", "--out", str(out1)]) == 0
    assert main(["sample", "--model", str(trained_model), "-n", "200",
                 "--seed", "3", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    # matches the library call bit-exactly
    model = DensityModel.load(trained_model)
    direct = sample(model, 200, seed=3)
    npt.assert_array_equal(load_csv(out1).samples, direct)


def test_sample_zero_rows_header_only(trained_model, tmp_path):
    out = tmp_path / "empty.csv"
    assert main(["sample", "--model", str(trained_model), "-n", "0",
                 "--out", str(out)]) == 0
    assert out.read_text() == "x1,x2\n"


def test_eval_identical_files_small_stv(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4000, 2))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_csv(a, x)
    save_csv(b, x)
    assert main(["eval", "--samples", str(a), "--samples2", str(b)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["sliced_tv"] < 0.02


def test_eval_model_matches_library_bit_exact(trained_model, tmp_path, capsys):
    rng = np.random.default_rng(1)
    data = rng.uniform(0.1, 0.9, size=(500, 2))
    path = tmp_path / "data.csv"
    save_csv(path, data)
    assert main(["eval", "--samples", str(path), "--model", str(trained_model),
                 "--seed", "7", "--n-projections", "16"]) == 0
    report = json.loads(capsys.readouterr().out)

    model = DensityModel.load(trained_model)
    drawn = sample(model, 500, seed=7)
    loaded = load_csv(path, val_fraction=0.0).samples
    assert report["sliced_tv"] == sliced_tv(loaded, drawn, 16, seed=7)
    ce = cross_entropy(model, loaded)
    assert report["cross_entropy"] == ce.value
    assert report["negative_density_fraction"] == ce.n_nonpositive / 500


def test_eval_requires_comparison_target(tmp_path, capsys):
    path = tmp_path / "x.csv"
    save_csv(path, np.zeros((3, 2)))
    assert main(["eval", "--samples", str(path)]) == 2


def test_grid_uniform_model_constant_and_integrates(tmp_path, capsys):
    from ttdensity.basis import BSplineBasis
    from ttdensity.tt import rank1_from_vectors

    bases = [BSplineBasis(8, 0.0, 1.0) for _ in range(2)]
    model = DensityModel(rank1_from_vectors([np.ones(8)] * 2), bases,
                         "plain").normalize()
    mpath = tmp_path / "uniform.json"
    model.save(mpath)
    out = tmp_path / "grid.csv"
    assert main(["grid", "--model", str(mpath), "--resolution", "41",
                 "--out", str(out)]) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert rows.shape == (41 * 41, 3)
    npt.assert_allclose(rows[:, 2], 1.0, atol=1e-10)  # constant density column
    assert out.with_suffix(".csv.png").exists()
    # trapezoid integral over the grid equals the 2D mass
    xs = np.unique(rows[:, 0])
    vals = rows[:, 2].reshape(41, 41)
    total = np.trapezoid(np.trapezoid(vals, xs, axis=1), np.unique(rows[:, 1]))
    assert total == pytest.approx(1.0, abs=1e-3)


def test_grid_trained_model_integrates_to_marginal_mass(trained_model, tmp_path):
    out = tmp_path / "grid.csv"
    assert main(["grid", "--model", str(trained_model), "--resolution", "80",
                 "--out", str(out), "--no-figure"]) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    xs = np.unique(rows[:, 0])
    ys = np.unique(rows[:, 1])
    vals = rows[:, 2].reshape(80, 80)
    total = np.trapezoid(np.trapezoid(vals, xs, axis=1), ys)
    assert total == pytest.approx(1.0, abs=0.02)  # full 2D face of a 2D model
    assert not out.with_suffix(".csv.png").exists()


def test_grid_resolution_one_single_cell(trained_model, tmp_path):
    out = tmp_path / "one.csv"
    assert main(["grid", "--model", str(trained_model), "--resolution", "1",
                 "--out", str(out), "--no-figure"]) == 0
    assert len(out.read_text().splitlines()) == 2


def test_grid_bad_dims(trained_model, tmp_path):
    assert main(["grid", "--model", str(trained_model), "--dims", "1,9",
                 "--out", str(tmp_path / "g.csv")]) == 2


def test_grid_reruns_are_byte_identical(trained_model, tmp_path):
    out1, out2 = tmp_path / "g1.csv", tmp_path / "g2.csv"
    for out in (out1, out2):
        assert main(["grid", "--model", str(trained_model), "--resolution", "16",
                     "--out", str(out), "--no-figure"]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_train_rerun_byte_identical_pipeline(tmp_path):
    """Same seed end to end: model file, log, and sample CSV all match."""
    outs = []
    for tag in ("a", "b"):
        mpath = tmp_path / f"m{tag}.json"
        spath = tmp_path / f"s{tag}.csv"
        assert main(["train", "--data", "toy:checkerboard", "--toy-n", "2000",
                     "--rank", "2", "--basis-size", "8", "--iters", "10",
                     "--seed", "5", "--out", str(mpath), "--no-figure"]) == 0
        assert main(["sample", "--model", str(mpath), "-n", "50", "--seed", "2",
                     "--out", str(spath)]) == 0
        outs.append((mpath.read_bytes(), spath.read_bytes()))
    assert outs[0][0] == outs[1][0]
    assert outs[0][1] == outs[1][1]


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("rank = 3\niters = 5  # short run\n")
    out = tmp_path / "m.json"
    assert main(["train", "--data", "toy:two_moons", "--toy-n", "1000",
                 "--rank", "8", "--iters", "200", "--config", str(cfg),
                 "--out", str(out), "--no-figure"]) == 0
    model = DensityModel.load(out)
    assert max(model.alpha.ranks) <= 3
    log = out.with_suffix(".json.log.csv")
    last_iter = int(log.read_text().splitlines()[-1].split(",")[0])
    assert last_iter == 5


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("frobnication_level = 9\n")
    assert main(["train", "--data", "toy:two_moons", "--config", str(cfg),
                 "--out", str(tmp_path / "m.json")]) == 2


def test_sweep_writes_one_model_per_value(tmp_path):
    out = tmp_path / "m.json"
    assert main(["train", "--data", "toy:two_moons", "--toy-n", "1000",
                 "--basis-size", "8", "--iters", "5", "--sweep", "rank=2,3",
                 "--out", str(out), "--no-figure"]) == 0
    assert (tmp_path / "m-rank2.json").exists()
    assert (tmp_path / "m-rank3.json").exists()


def test_squared_variant_cli_roundtrip(tmp_path):
    out = tmp_path / "sq.json"
    assert main(["train", "--data", "toy:two_moons", "--toy-n", "2000",
                 "--variant", "squared", "--rank", "3", "--basis-size", "12",
                 "--iters", "30", "--lr", "0.05", "--out", str(out),
                 "--no-figure"]) == 0
    model = DensityModel.load(out)
    assert model.variant == "squared"
    spath = tmp_path / "sq.csv"
    assert main(["sample", "--model", str(out), "-n", "20",
                 "--out", str(spath)]) == 0
    assert len(spath.read_text().splitlines()) == 21
