import dataclasses
import json
import logging
from pathlib import Path

import click

from dcornet.dcor_core import dcor, demo_sampler, pearson
from dcornet.diffgrad import (
    bias_corrected_dcor2_value_grad, dcor_loss, finite_diff_check, pdcor_loss,
)
from dcornet.dump import load_features, load_model, save_model, write_dump
from dcornet.experiments.datasets import make_blobs
from dcornet.experiments.similarity import (
    common_samples, layer_similarity_heatmap, model_feature_dump, stochastic_pdc_estimate,
)
from dcornet.experiments.transfer import train_independent_pair, transfer_attack_eval
from dcornet.models import DatasetConfig
from dcornet.nn import init_mlp
from dcornet.pdc import pdcor
from dcornet.reports import (
    export_heatmap, provenance, write_accuracy_table, write_metrics,
)
from dcornet.schemas.run_schema import load_run_config
from dcornet.selftest import run_selftest
from dcornet.utils import (
    DcorException, DegenerateError, InvalidInputError, UsageError, make_rng,
)

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-6

# independent generator streams per consumer of the run seed
DATA_STREAM, F1_INIT_STREAM, F2_INIT_STREAM, PROBE_STREAM = 0, 10, 20, 30


def _layer(dump, name):
    if name is None:
        if len(dump.layers) != 1:
            raise UsageError(f"{dump.model_name} has layers {dump.layer_names}; pick one")
        name = dump.layer_names[0]
    return dump.features(name)


def desk_setup(cfg):
    """Seeded dataset and the two freshly initialised models of a run configuration."""
    data = make_blobs(cfg.dataset, make_rng(cfg.seed, DATA_STREAM))
    sizes = cfg.model.sizes(cfg.dataset.dim, cfg.dataset.n_classes)
    f1 = init_mlp(sizes, make_rng(cfg.seed, F1_INIT_STREAM), cfg.model.feature_tap)
    f2 = init_mlp(sizes, make_rng(cfg.seed, F2_INIT_STREAM), cfg.model.feature_tap)
    return data, f1, f2


def setup_commands(cli):
    """Register every subcommand on the root click group."""

    @cli.command("dcor")
    @click.argument("dump_a", type=click.Path(exists=True, dir_okay=False))
    @click.argument("dump_b", type=click.Path(exists=True, dir_okay=False))
    @click.option("--layer-a", default=None, help="Layer of DUMP_A (optional for one-layer dumps).")
    @click.option("--layer-b", default=None, help="Layer of DUMP_B (optional for one-layer dumps).")
    @click.option("-n", "n_samples", type=int, default=None, help="Use the first N common samples.")
    @click.option("--json", "as_json", is_flag=True, help="Print the full report as JSON.")
    def dcor_command(dump_a, dump_b, layer_a, layer_b, n_samples, as_json):
        """Distance correlation between one layer of each dump."""
        a, b = load_features(dump_a), load_features(dump_b)
        n = common_samples(a, b, n_samples or len(a.sample_ids))
        report = dcor(_layer(a, layer_a)[:n], _layer(b, layer_b)[:n])
        if report.degenerate:
            raise DegenerateError("distance variance vanishes on one side; dCor is defined as 0",
                                  payload=report.to_dict())
        if as_json:
            click.echo(json.dumps({**report.to_dict(), "provenance": provenance(None, n)},
                                  sort_keys=True))
        else:
            click.echo(f"{report.dcor:.6f}")

    @cli.command("pdcor")
    @click.argument("dump_x", type=click.Path(exists=True, dir_okay=False))
    @click.argument("dump_y", type=click.Path(exists=True, dir_okay=False))
    @click.argument("dump_gt", type=click.Path(exists=True, dir_okay=False))
    @click.option("--layer-x", default=None)
    @click.option("--layer-y", default=None)
    @click.option("--layer-gt", default=None)
    @click.option("-n", "n_samples", type=int, default=None)
    @click.option("-m", "batch", type=int, default=None,
                  help="Average over minibatches of M samples instead of one full batch.")
    def pdcor_command(dump_x, dump_y, dump_gt, layer_x, layer_y, layer_gt, n_samples, batch):
        """Partial distance correlation of X with GT given Y."""
        dx, dy, dgt = load_features(dump_x), load_features(dump_y), load_features(dump_gt)
        n = n_samples or len(dx.sample_ids)
        n = common_samples(dx, dy, n)
        n = common_samples(dx, dgt, n)
        x, y, gt = (_layer(d, name)[:n] for d, name in
                    ((dx, layer_x), (dy, layer_y), (dgt, layer_gt)))
        if batch:
            click.echo(f"{stochastic_pdc_estimate(x, y, gt, batch):.6f}")
            return
        report = pdcor(x, gt, y)
        if report.degenerate:
            raise DegenerateError("projected U-centered matrix has no energy; R*² is defined as 0",
                                  payload=report.to_dict())
        click.echo(f"{report.pdcor2:.6f}")

    @cli.command("heatmap")
    @click.argument("dump_a", type=click.Path(exists=True, dir_okay=False))
    @click.argument("dump_b", type=click.Path(exists=True, dir_okay=False), required=False)
    @click.option("-o", "--output", required=True, help="Output path prefix (.csv/.json are appended).")
    @click.option("-n", "n_samples", type=int, default=256, show_default=True)
    @click.option("--parallel", type=click.IntRange(min=1), default=1, show_default=True)
    def heatmap_command(dump_a, dump_b, output, n_samples, parallel):
        """Layer-by-layer dCor matrix within one model or across two."""
        a = load_features(dump_a)
        b = load_features(dump_b) if dump_b else None
        hm = layer_similarity_heatmap(a, b, n_samples=n_samples, parallel=parallel)
        seeds = {d.extra.get("seed") for d in (a, b) if d is not None}
        seed = seeds.pop() if len(seeds) == 1 else None
        paths = export_heatmap(hm, output, provenance(seed, hm.n_samples))
        click.echo(f"{hm.values.shape[0]}x{hm.values.shape[1]} heatmap -> {paths['csv']}")

    @cli.command("train-pair")
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
    @click.option("--with-baseline", is_flag=True, help="Also train the alpha=0 pair for comparison.")
    def train_pair_command(config_path, with_baseline):
        """Train f1 on CE and f2 on CE + alpha*dCor(g1, g2); write models and metrics."""
        cfg = load_run_config(config_path)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        data, f1, f2 = desk_setup(cfg)
        f1_t, f2_t, metrics = train_independent_pair(f1, f2, data, cfg.pair)
        save_model(out / "f1.dcfd", f1_t, "f1")
        save_model(out / "f2.dcfd", f2_t, "f2")
        if with_baseline:
            base_cfg = dataclasses.replace(cfg.pair, alpha=0.0)
            _, f2_b, base_metrics = train_independent_pair(f1, f2, data, base_cfg)
            save_model(out / "f2_baseline.dcfd", f2_b, "f2_baseline")
            metrics = {"regularized": metrics, "baseline": base_metrics}
        prov = provenance(cfg.seed, cfg.dataset.n_train, cfg.pair.batch_size)
        write_metrics(out / "metrics.json", metrics, prov)
        click.echo(f"metrics -> {out / 'metrics.json'}")

    @cli.command("attack-eval")
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
    @click.option("--f1", "f1_path", default=None, help="Source model (default: OUTPUT_DIR/f1.dcfd).")
    @click.option("--f2", "f2_path", default=None, help="Target model (default: OUTPUT_DIR/f2.dcfd).")
    @click.option("-o", "--output", default=None, help="CSV path (default: OUTPUT_DIR/attack_eval.csv).")
    def attack_eval_command(config_path, f1_path, f2_path, output):
        """Accuracy of f2 on adversarial examples crafted on f1."""
        cfg = load_run_config(config_path)
        out = Path(cfg.output_dir)
        f1_path = Path(f1_path or out / "f1.dcfd")
        f2_path = Path(f2_path or out / "f2.dcfd")
        for p in (f1_path, f2_path):
            if not p.exists():
                raise InvalidInputError(f"{p} not found; run train-pair first")
        data = make_blobs(cfg.dataset, make_rng(cfg.seed, DATA_STREAM))
        rows = transfer_attack_eval(load_model(f1_path), load_model(f2_path),
                                    data.x_test, data.y_test, cfg.attacks)
        target = Path(output) if output else out / "attack_eval.csv"
        target.parent.mkdir(parents=True, exist_ok=True)
        table = write_accuracy_table(target, rows, provenance(cfg.seed, cfg.dataset.n_test))
        click.echo(table[["attack", "epsilon", "clean_accuracy", "transfer_accuracy"]]
                   .to_string(index=False))

    @cli.command("grad-check")
    @click.option("--loss", type=click.Choice(["dcor", "pdcor", "bias-corrected"]), default="dcor",
                  show_default=True)
    @click.option("-n", "n_samples", type=int, default=16, show_default=True)
    @click.option("--seed", type=int, default=0, show_default=True)
    @click.option("--h", "step", type=float, default=1e-5, show_default=True)
    def grad_check_command(loss, n_samples, seed, step):
        """Compare the analytic gradient with central differences at a seeded point."""
        rng = make_rng(seed, PROBE_STREAM)
        x, y, z = rng.standard_normal((n_samples, 5)), rng.standard_normal((n_samples, 3)), \
            rng.standard_normal((n_samples, 4))
        handle = {
            "dcor": lambda: dcor_loss(y),
            "pdcor": lambda: pdcor_loss(y, z),
            "bias-corrected": lambda: (lambda X: bias_corrected_dcor2_value_grad(X, y)),
        }[loss]()
        worst = finite_diff_check(handle, x, h=step)
        click.echo(f"{loss}: max discrepancy {worst:.3e}")
        if worst >= GRAD_TOLERANCE:
            raise DcorException(f"gradient check failed: {worst:.3e} >= {GRAD_TOLERANCE:g}",
                                exit_code=3)

    @cli.command("demo")
    @click.option("--case", type=click.Choice(["a", "b", "c", "d"], case_sensitive=False), required=True)
    @click.option("-n", "n_samples", type=int, default=5000, show_default=True)
    @click.option("--seed", type=int, default=0, show_default=True)
    def demo_command(case, n_samples, seed):
        """Pearson and distance correlation for one of the four toy distributions."""
        x, y = demo_sampler(case, n_samples, seed)
        click.echo(f"pearson: {pearson(x.data, y.data):.6f}")
        click.echo(f"dcor: {dcor(x, y).dcor:.6f}")

    cli.add_command(demo_command, "fig1")

    @cli.command("selftest")
    def selftest_command():
        """Run the oracle-equivalence and property checks."""
        results = run_selftest()
        for r in results:
            click.echo(f"[{'ok' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise DcorException(f"{len(failed)} selftest check(s) failed", exit_code=3)

    @cli.command("dump-features")
    @click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None,
                  help="Saved model; a fresh seeded MLP is used when omitted.")
    @click.option("-n", "n_samples", type=int, default=256, show_default=True)
    @click.option("--seed", type=int, default=0, show_default=True)
    @click.option("--layers", "n_layers", type=click.IntRange(min=1), default=8, show_default=True,
                  help="Depth of the fresh MLP.")
    @click.option("--width", type=click.IntRange(min=1), default=64, show_default=True)
    @click.option("--dtype", type=click.Choice(["f32", "f64"]), default="f64", show_default=True)
    @click.option("-o", "--output", required=True)
    def dump_features_command(model_path, n_samples, seed, n_layers, width, dtype, output):
        """Write every layer's activations on seeded blob inputs as a DCFD dump."""
        if model_path:
            params = load_model(model_path)
            name = Path(model_path).stem
        else:
            params = init_mlp([width] * n_layers + [10], make_rng(seed, F1_INIT_STREAM))
            name = f"mlp{n_layers}x{width}"
        dim = params.sizes[0]
        data = make_blobs(DatasetConfig(dim=dim, n_train=n_samples, n_test=1),
                          make_rng(seed, DATA_STREAM))
        dump = model_feature_dump(params, data.x_train, model_name=name, dtype=dtype)
        dump.extra.update(provenance(seed, n_samples))
        write_dump(output, dump)
        click.echo(f"{len(dump.layers)} layers x {n_samples} samples -> {output}")
