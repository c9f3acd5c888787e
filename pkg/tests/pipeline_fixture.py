"""Pinned end-to-end pipeline used by the acceptance regression.

Everything here is fixed: corpus seed, decoy settings, encoder size, and
training schedule. The resulting pretraining loss curve is committed at
tests/data/pipeline_losscurve.csv and must reproduce exactly on one
platform. Regenerate with `python tests/regen_regression.py` after any
intentional change.
"""

from __future__ import annotations

import json
from pathlib import Path

import synth
from decoyforge.cli import main as cli_main
from decoyforge.encoder import load_checkpoint
from decoyforge.store import Dataset
from decoyforge.training import TrainConfig, finetune, labeled_from_dataset, split_labeled

CORPUS_SEED = 2024
N_ENTRIES = 32
DECOY_CONFIG = {
    "poses_per_complex": 16,
    "translation_sigma": 1.2,
    "rotation_max": 2.0,
    "torsion_sigma": 0.5,
    "clash_min_distance": 1.2,
    "rng_seed": 11,
}
ENCODER_CONFIG = {"layers": 2, "hidden_dim": 32, "rbf_bins": 8, "type_dim": 8}
TRAIN_CONFIG = {
    "pretrain_epochs": 20,
    "pretrain_batch": 8,
    "finetune_batch": 8,  # 32-complex corpus: keep several steps per epoch
    "seed": 0,
    "pretrain_val_fraction": 0.05,
}
FINETUNE_EPOCHS = 20

COMMITTED_CURVE = Path(__file__).parent / "data" / "pipeline_losscurve.csv"


def build_pretrained(workdir: Path) -> dict:
    """Corpus -> dataset -> decoys -> pretrain, all through the CLI."""
    corpus = workdir / "corpus"
    dataset = workdir / "dataset"
    run = workdir / "run"
    synth.write_corpus(corpus, n_entries=N_ENTRIES, seed=CORPUS_SEED)

    rc = cli_main(["build", "--in", str(corpus), "--out", str(dataset)])
    assert rc == 0, "build failed"

    decoy_cfg = workdir / "decoys.json"
    decoy_cfg.write_text(json.dumps(DECOY_CONFIG))
    rc = cli_main(["decoys", "generate", "--dataset", str(dataset),
                   "--config", str(decoy_cfg)])
    assert rc == 0, "decoy generation failed"

    enc_cfg = workdir / "encoder.json"
    enc_cfg.write_text(json.dumps(ENCODER_CONFIG))
    train_cfg = workdir / "train.json"
    train_cfg.write_text(json.dumps(TRAIN_CONFIG))
    ckpt = run / "pretrained.ckpt"
    rc = cli_main(["pretrain", "--dataset", str(dataset), "--out", str(ckpt),
                   "--encoder-config", str(enc_cfg), "--train-config", str(train_cfg)])
    assert rc == 0, "pretraining failed"
    return {
        "dataset": dataset,
        "checkpoint": ckpt,
        "losscurve": run / "losscurve.csv",
    }


FINETUNE_SEED = 1
FINETUNE_LR = 1e-3
FINETUNE_LABELS = 16  # low-label regime, where pretraining should pay off most


def finetune_pair(dataset_dir: Path, checkpoint: Path) -> tuple[float, float]:
    """Best validation RMSE within FINETUNE_EPOCHS: (pretrained, scratch)."""
    ds = Dataset.open(dataset_dir)
    labels = synth.interactive_edge_labels(ds)
    init_params, ecfg, _ = load_checkpoint(checkpoint)
    labeled = labeled_from_dataset(ds, labels, cutoff=ecfg.cutoff)
    tcfg = TrainConfig(lr=FINETUNE_LR, finetune_batch=8, seed=FINETUNE_SEED,
                       pretrain_val_fraction=0.05)
    train, val, _ = split_labeled(labeled, tcfg.seed, val_fraction=0.2, test_fraction=0.2)
    train = train[:FINETUNE_LABELS]

    results = {}
    for name, init in (("pretrained", init_params), ("scratch", None)):
        out = finetune(init, train, val, ecfg, tcfg, max_epochs=FINETUNE_EPOCHS)
        results[name] = min(h["val_rmse"] for h in out.history)
    return results["pretrained"], results["scratch"]
