"""Command-line pipeline: build, decoys, stats, pretrain, finetune, eval.

Precedence for settings: built-in defaults, then command-line flags, then
config-file values (config files win so a run.json echo fully reproduces a
run). Every writing subcommand drops a run.json with the resolved
configuration beside its output. Exit codes: 0 ok, 1 usage, 2 data error,
3 training divergence.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .curation import FilterConfig, curate_corpus, load_manifest, write_rejections_csv
from .decoys import DecoyGenConfig, generate_decoys, ingest_poses
from .encoder import EncoderConfig, load_checkpoint, save_checkpoint
from .errors import DecoyForgeError, DivergedLoss
from .graphs import build_graph, graph_to_json
from .objective import ContrastiveConfig, DsmConfig
from .store import Dataset, compute_stats, stats_to_csv, write_dataset
from .training import (
    TrainConfig,
    evaluate,
    finetune,
    labeled_from_dataset,
    load_labels_csv,
    pretrain,
    split_labeled,
    write_loss_curve,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


def _load_config(cls, config_path: str | None, flag_values: dict):
    """defaults <- explicit flags <- config file."""
    merged = dict(flag_values)
    if config_path:
        merged.update(json.loads(Path(config_path).read_text()))
    return cls.from_json(merged) if hasattr(cls, "from_json") else cls(**merged)


def _write_run_echo(out_dir: Path, command: str, configs: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {"command": command, "version": __version__}
    echo.update(configs)
    (out_dir / "run.json").write_text(json.dumps(echo, indent=1, sort_keys=True) + "\n")


@click.group()
@click.version_option(version=__version__, prog_name="decoyforge")
def cli():
    """Decoy-augmented protein-ligand corpora and contrastive pretraining."""


@cli.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              help="entries.json with per-entry resolution (default: <in>/entries.json if present)")
@click.option("--workers", default=1, show_default=True)
def build(in_dir, out_dir, config_path, manifest_path, workers):
    """Curate raw PDB files into a dataset directory."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    cfg = _load_config(FilterConfig, config_path, {})
    manifest = None
    manifest_file = Path(manifest_path) if manifest_path else in_dir / "entries.json"
    if manifest_file.exists():
        manifest = load_manifest(manifest_file)
    paths = sorted(p for p in in_dir.glob("*.pdb"))
    records, reports, summary = curate_corpus(paths, cfg, workers=workers, manifest=manifest)
    write_dataset(records, {}, out_dir)
    write_rejections_csv(reports, out_dir / "rejections.csv")
    _write_run_echo(out_dir, "build", {"filters": cfg.to_json(), "workers": workers,
                                       "n_entries": summary.n_entries})
    click.echo(f"entries: {summary.n_entries}")
    click.echo(f"retained complexes: {summary.n_retained}")
    for rule in sorted(summary.rejections):
        click.echo(f"rejected[{rule}]: {summary.rejections[rule]}")
    for path, error in summary.io_errors:
        click.echo(f"skipped {path}: {error}", err=True)


@cli.group()
def decoys():
    """Generate or ingest decoy poses for a built dataset."""


def _regen_dataset(ds: Dataset, decoy_map) -> None:
    records = [ds.read(cid).to_record() for cid in ds.complex_ids]
    write_dataset(records, decoy_map, ds.root)


@decoys.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--poses-per-complex", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", default=1, show_default=True)
def generate(dataset_dir, config_path, poses_per_complex, seed, workers):
    """Write perturbation decoys with annotated RMSD into the dataset."""
    flags = {}
    if poses_per_complex is not None:
        flags["poses_per_complex"] = poses_per_complex
    if seed is not None:
        flags["rng_seed"] = seed
    cfg = _load_config(DecoyGenConfig, config_path, flags)
    ds = Dataset.open(dataset_dir)
    ids = ds.complex_ids
    if not ids:
        raise DecoyForgeError("empty dataset")

    def one(cid: str):
        rec = ds.read(cid).to_record()
        return cid, generate_decoys(rec, cfg)

    if workers <= 1 or len(ids) <= 1:
        pairs = [one(cid) for cid in ids]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, ids))
    decoy_map = dict(pairs)
    _regen_dataset(ds, decoy_map)
    _write_run_echo(Path(dataset_dir), "decoys-generate", {"decoys": cfg.to_json()})
    short = sum(1 for cid, poses in pairs if len(poses) < cfg.poses_per_complex)
    total = sum(len(poses) for _, poses in pairs)
    click.echo(f"decoys written: {total} over {len(ids)} complexes")
    if short:
        click.echo(f"complexes with fewer than {cfg.poses_per_complex} poses: {short}", err=True)


@decoys.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--poses", "poses_dir", required=True, type=click.Path(exists=True, file_okay=False))
def ingest(dataset_dir, poses_dir):
    """Append externally docked poses (<complex_id>*.pdb, one pose per MODEL)."""
    ds = Dataset.open(dataset_dir)
    poses_dir = Path(poses_dir)
    decoy_map = {}
    n_new = 0
    for cid in ds.complex_ids:
        stored = ds.read(cid)
        existing = stored.decoys
        files = sorted(poses_dir.glob(f"{cid}*.pdb"))
        if files:
            new = ingest_poses(stored.to_record(), [f.read_text() for f in files])
            for pose in new:
                pose.pose_index = len(existing)
                existing.append(pose)
            n_new += len(new)
        decoy_map[cid] = existing
    _regen_dataset(ds, decoy_map)
    _write_run_echo(Path(dataset_dir), "decoys-ingest", {"poses_dir": str(poses_dir)})
    click.echo(f"ingested poses: {n_new}")


@cli.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="write CSV here instead of stdout")
def stats(dataset_dir, out_path):
    """Corpus summaries: atom/decoy histograms, RMSD histogram and CDF (CSV)."""
    ds = Dataset.open(dataset_dir)
    if len(ds) == 0:
        raise DecoyForgeError("empty dataset")
    report = compute_stats(ds)
    csv_text = stats_to_csv(report)
    if out_path:
        Path(out_path).write_text(csv_text)
    else:
        click.echo(csv_text, nl=False)
    click.echo(
        f"complexes: {report.n_complexes}  decoys: {report.n_decoys}  d_max: {report.d_max}",
        err=True,
    )


def _train_configs(seed, encoder_config, objective_config, train_config, epochs=None):
    tflags = {}
    if seed is not None:
        tflags["seed"] = seed
    if epochs is not None:
        tflags["pretrain_epochs"] = epochs
    tcfg = _load_config(TrainConfig, train_config, tflags)
    ecfg = _load_config(EncoderConfig, encoder_config, {})
    omerged = json.loads(Path(objective_config).read_text()) if objective_config else {}
    ckeys = {f.name for f in ContrastiveConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    ccfg = ContrastiveConfig.from_json({k: v for k, v in omerged.items() if k in ckeys})
    dcfg = DsmConfig.from_json({k: v for k, v in omerged.items() if k not in ckeys})
    return tcfg, ecfg, ccfg, dcfg


@cli.command(name="pretrain")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--encoder-config", type=click.Path(exists=True, dir_okay=False))
@click.option("--objective-config", type=click.Path(exists=True, dir_okay=False),
              help="objective.json holding contrastive + denoising settings")
@click.option("--train-config", type=click.Path(exists=True, dir_okay=False))
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
def pretrain_cmd(dataset_dir, out_path, encoder_config, objective_config, train_config, epochs, seed):
    """Contrastive + denoising pretraining; writes checkpoint and loss curve."""
    tcfg, ecfg, ccfg, dcfg = _train_configs(seed, encoder_config, objective_config, train_config, epochs)
    ds = Dataset.open(dataset_dir)
    if len(ds) == 0:
        raise DecoyForgeError("empty dataset")
    if ds.d_max is None:
        raise DecoyForgeError("dataset has no decoys; run `decoyforge decoys generate` first")
    result = pretrain(ds, ecfg, ccfg, dcfg, tcfg, log=lambda m: click.echo(m, err=True))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_path, result.params, ecfg, extra={"phase": "pretrain", "seed": tcfg.seed})
    write_loss_curve(result.history, out_path.parent / "losscurve.csv")
    _write_run_echo(out_path.parent, "pretrain", {
        "train": tcfg.to_json(), "encoder": ecfg.to_json(),
        "contrastive": ccfg.to_json(), "dsm": dcfg.to_json(),
        "dataset": str(dataset_dir),
    })
    click.echo(f"checkpoint: {out_path}")


@cli.command(name="finetune")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--init", "init_path", default="none",
              help="pretraining checkpoint, or 'none' to train from scratch")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--train-config", type=click.Path(exists=True, dir_okay=False))
@click.option("--max-epochs", type=int, default=None)
@click.option("--val-fraction", default=0.15, show_default=True)
@click.option("--test-fraction", default=0.15, show_default=True)
@click.option("--seed", type=int, default=None)
def finetune_cmd(dataset_dir, labels_path, init_path, out_dir, train_config, max_epochs,
                 val_fraction, test_fraction, seed):
    """Supervised fine-tuning on labeled complexes; writes model + metrics."""
    tflags = {"seed": seed} if seed is not None else {}
    tcfg = _load_config(TrainConfig, train_config, tflags)
    ds = Dataset.open(dataset_dir)
    labels = load_labels_csv(labels_path)
    if init_path != "none":
        init_params, ecfg, _ = load_checkpoint(init_path)
    else:
        init_params, ecfg = None, EncoderConfig()
    labeled = labeled_from_dataset(ds, labels, cutoff=ecfg.cutoff)
    if not labeled:
        raise DecoyForgeError("no dataset complex has a label in the labels file")
    train, val, test = split_labeled(labeled, tcfg.seed, val_fraction, test_fraction)
    result = finetune(init_params, train, val, ecfg, tcfg, test=test or None,
                      max_epochs=max_epochs, log=lambda m: click.echo(m, err=True))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ckpt", result.params, ecfg,
                    extra={"phase": "finetune", "seed": tcfg.seed})
    history = [
        {"epoch": h["epoch"], "train_loss": h["train_loss"], "val_loss": h["val_rmse"]}
        for h in result.history
    ]
    write_loss_curve(history, out_dir / "losscurve.csv")
    report = result.test_report if result.test_report is not None else evaluate(result.params, val, ecfg)
    (out_dir / "metrics.json").write_text(json.dumps(report.to_json(), indent=1) + "\n")
    _write_run_echo(out_dir, "finetune", {
        "train": tcfg.to_json(), "encoder": ecfg.to_json(), "init": init_path,
        "dataset": str(dataset_dir), "labels": str(labels_path),
        "val_fraction": val_fraction, "test_fraction": test_fraction,
    })
    click.echo(f"best epoch: {result.best_epoch}  val_rmse: {result.best_val_rmse:.6f}")
    click.echo(f"test rmse: {report.rmse:.6f}  pearson_r: {report.pearson_r}")


@cli.command(name="eval")
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def eval_cmd(ckpt_path, dataset_dir, labels_path, as_json):
    """Evaluate a checkpoint's affinity predictions against labels."""
    params, ecfg, _ = load_checkpoint(ckpt_path)
    ds = Dataset.open(dataset_dir)
    labeled = labeled_from_dataset(ds, load_labels_csv(labels_path), cutoff=ecfg.cutoff)
    if not labeled:
        raise DecoyForgeError("no dataset complex has a label in the labels file")
    report = evaluate(params, labeled, ecfg)
    if as_json:
        click.echo(json.dumps(report.to_json()))
    else:
        click.echo(f"n: {report.n}  rmse: {report.rmse:.6f}  pearson_r: {report.pearson_r}")


@cli.command(name="gradcheck")
@click.option("--seeds", default=100, show_default=True)
def gradcheck_cmd(seeds):
    """Finite-difference verification of every op and the training objective."""
    from .gradcheck import run_all

    results = run_all(n_seeds=seeds)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "ok" if r.passed else "FAIL"
        click.echo(f"{status:4s} {r.name:24s} max_rel_err={r.max_error:.3e}")
    if failed:
        raise DecoyForgeError(f"{len(failed)} gradient check(s) failed")
    click.echo(f"all {len(results)} gradient checks passed")


@cli.command(name="export-graph")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--complex", "complex_id", required=True)
@click.option("--pose", "pose_index", type=int, default=None, help="decoy pose index (native if omitted)")
@click.option("--cutoff", default=5.0, show_default=True)
def export_graph_cmd(dataset_dir, complex_id, pose_index, cutoff):
    """Print one complex graph as JSON (debug / bindings parity)."""
    ds = Dataset.open(dataset_dir)
    stored = ds.read(complex_id)
    pose = None
    if pose_index is not None:
        if pose_index < 0 or pose_index >= len(stored.decoys):
            raise DecoyForgeError(
                f"pose {pose_index} out of range ({len(stored.decoys)} decoys)"
            )
        pose = stored.decoys[pose_index]
    graph = build_graph(stored.to_record(), pose=pose, cutoff=cutoff)
    click.echo(json.dumps(graph_to_json(graph)))


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:  # --version / --help
        return int(exc.exit_code)
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except DivergedLoss as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DIVERGED
    except (DecoyForgeError, OSError, json.JSONDecodeError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
