import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from app import cli
from dcornet.dump import build_dump, read_dump, write_dump


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dumps(tmp_path, rng):
    x = rng.standard_normal((40, 3))
    a = tmp_path / "a.dcfd"
    b = tmp_path / "b.dcfd"
    write_dump(a, build_dump("a", {"h1": x, "h2": np.tanh(x)}))
    write_dump(b, build_dump("b", {"emb": rng.standard_normal((40, 2))}))
    return a, b


def test_same_layer_prints_one(runner, dumps):
    a, _ = dumps
    result = runner.invoke(cli, ["dcor", str(a), str(a), "--layer-a", "h1", "--layer-b", "h1"])
    assert result.exit_code == 0, result.output
    assert result.output.strip() == "1.000000"


def test_dcor_json_report(runner, dumps):
    a, b = dumps
    result = runner.invoke(cli, ["dcor", str(a), str(b), "--layer-a", "h2", "-n", "30", "--json"])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert 0.0 <= payload["dcor"] <= 1.0
    assert payload["provenance"]["n"] == 30


def test_ambiguous_layer_is_a_usage_error(runner, dumps):
    a, b = dumps
    result = runner.invoke(cli, ["dcor", str(a), str(b)])
    assert result.exit_code == 1
    assert "h1" in result.output


def test_constant_features_exit_degenerate(runner, dumps, tmp_path):
    a, _ = dumps
    const = tmp_path / "const.csv"
    pd.DataFrame({"sample_id": [str(i) for i in range(40)], "f": [2.0] * 40}).to_csv(const, index=False)
    result = runner.invoke(cli, ["dcor", str(a), str(const), "--layer-a", "h1"])
    assert result.exit_code == 3
    assert "error:" in result.output


def test_corrupt_dump_exits_with_data_error(runner, tmp_path):
    bad = tmp_path / "bad.dcfd"
    bad.write_bytes(b"not a dump at all")
    result = runner.invoke(cli, ["dcor", str(bad), str(bad)])
    assert result.exit_code == 2
    assert "not a DCFD file" in result.output


def test_unknown_command_exits_one(runner):
    result = runner.invoke(cli, ["frobnicate"])
    assert result.exit_code == 1


def test_pdcor_full_and_minibatch(runner, dumps, tmp_path, rng):
    a, b = dumps
    y = tmp_path / "y.dcfd"
    write_dump(y, build_dump("y", {"g": rng.standard_normal((40, 4))}))
    full = runner.invoke(cli, ["pdcor", str(a), str(y), str(b), "--layer-x", "h1"])
    assert full.exit_code == 0, full.output
    batched = runner.invoke(cli, ["pdcor", str(a), str(y), str(b), "--layer-x", "h1", "-m", "10"])
    assert batched.exit_code == 0, batched.output
    assert -1.0 <= float(batched.output) <= 1.0


def test_demo_prints_both_statistics(runner):
    result = runner.invoke(cli, ["demo", "--case", "d", "-n", "400", "--seed", "1"])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[0].startswith("pearson: ") and lines[1].startswith("dcor: ")
    assert 0.0 <= float(lines[1].split()[1]) <= 1.0


def test_fig1_independent_case_has_small_dcor(runner):
    result = runner.invoke(cli, ["fig1", "--case", "d", "-n", "5000", "--seed", "7"])
    assert result.exit_code == 0, result.output
    assert float(result.output.splitlines()[1].split()[1]) < 0.08
    demo = runner.invoke(cli, ["demo", "--case", "d", "-n", "5000", "--seed", "7"])
    assert demo.output == result.output


@pytest.mark.parametrize("loss", ["dcor", "pdcor", "bias-corrected"])
def test_grad_check_passes(runner, loss):
    result = runner.invoke(cli, ["grad-check", "--loss", loss, "-n", "10"])
    assert result.exit_code == 0, result.output
    assert "max discrepancy" in result.output


def test_selftest_passes(runner):
    result = runner.invoke(cli, ["selftest"])
    assert result.exit_code == 0, result.output
    assert "FAIL" not in result.output


def test_dump_features_then_heatmap(runner, tmp_path):
    dump_path = tmp_path / "mlp.dcfd"
    result = runner.invoke(cli, ["dump-features", "--layers", "3", "--width", "8", "-n", "64",
                                 "--dtype", "f32", "-o", str(dump_path)])
    assert result.exit_code == 0, result.output
    dump = read_dump(dump_path)
    assert dump.layer_names == ["h1", "h2", "logits"]
    assert dump.layers[0].dtype == "f32"

    prefix = tmp_path / "hm"
    result = runner.invoke(cli, ["heatmap", str(dump_path), "-o", str(prefix), "--parallel", "2"])
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "hm.json").read_text())
    assert np.allclose(np.diag(report["values"]), 1.0, atol=1e-12)
    assert report["provenance"]["seed"] == 0
    assert (tmp_path / "hm.csv").exists()


def test_train_pair_then_attack_eval(runner, tmp_path):
    out = tmp_path / "run"
    config = tmp_path / "run.yaml"
    config.write_text(
        f"seed: 3\noutput_dir: {out}\n"
        "dataset: {n_classes: 3, dim: 6, n_train: 96, n_test: 48}\n"
        "model: {hidden: [8, 8]}\n"
        "pair: {alpha: 0.5, epochs: 2, batch_size: 32}\n"
        "attacks: [{kind: FGM, epsilon: 0.1}, {kind: PGD, epsilon: 0.1, pgd_iters: 3}]\n")
    result = runner.invoke(cli, ["train-pair", "--config", str(config), "--with-baseline"])
    assert result.exit_code == 0, result.output
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["metrics"]) == {"regularized", "baseline"}
    assert metrics["provenance"]["seed"] == 3
    assert (out / "f2_baseline.dcfd").exists()

    result = runner.invoke(cli, ["attack-eval", "--config", str(config)])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / "attack_eval.csv")
    assert table["attack"].tolist() == ["FGM", "PGD"]


def test_attack_eval_without_models(runner, tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text(f"output_dir: {tmp_path / 'empty'}\n")
    result = runner.invoke(cli, ["attack-eval", "--config", str(config)])
    assert result.exit_code == 2
    assert "train-pair" in result.output


def test_version_flag(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "dcornet" in result.output


def test_repeated_runs_write_identical_bytes(runner, tmp_path):
    outputs = []
    for run in ("first", "second"):
        base = tmp_path / run
        base.mkdir()
        dump_path = base / "mlp.dcfd"
        result = runner.invoke(cli, ["dump-features", "--layers", "3", "--width", "8", "-n", "48",
                                     "--seed", "5", "-o", str(dump_path)])
        assert result.exit_code == 0, result.output
        result = runner.invoke(cli, ["heatmap", str(dump_path), "-o", str(base / "hm"), "--parallel", "2"])
        assert result.exit_code == 0, result.output
        config = base / "run.yaml"
        config.write_text(
            f"seed: 5\noutput_dir: {base / 'run'}\n"
            "dataset: {n_classes: 3, dim: 6, n_train: 64, n_test: 32}\n"
            "model: {hidden: [8, 8]}\n"
            "pair: {alpha: 0.5, epochs: 2, batch_size: 16}\n")
        result = runner.invoke(cli, ["train-pair", "--config", str(config)])
        assert result.exit_code == 0, result.output
        outputs.append(base)

    for name in ("mlp.dcfd", "hm.csv", "hm.json", "run/f1.dcfd", "run/f2.dcfd", "run/metrics.json"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name
