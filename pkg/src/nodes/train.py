"""Train a generative model on the ID training set.

- Loads the training set from the manifest
- Builds the model for the (frequency-augmented) input spec
- Trains with mini-batch Adam, recording the loss per epoch
- Writes the checkpoint (+ model.json), loss curve and resolved config
"""
import dataclasses

import pyarrow as pa
from freqreg import config, experiment, io
from freqreg.datasets import Dataset, load_manifest
from freqreg.experiment import ExperimentConfig
from freqreg.models import build_model, save_model, train
from freqreg.models.training import TrainResult
from experiment_utils import write_table


def check_inputs(cfg: ExperimentConfig, names: list[str], manifest_uri: str | None = None) -> None:
    """Fail fast: manifest and dataset files exist, output dir writable."""
    manifest_uri = manifest_uri or cfg.data.manifest
    config.validate_environment(cfg.output_dir, [manifest_uri])
    manifest = load_manifest(manifest_uri)
    config.validate_environment(cfg.output_dir, manifest.paths(names))


def load_training_set(cfg: ExperimentConfig) -> Dataset:
    ds = load_manifest(cfg.data.manifest).load(cfg.data.train)
    return ds.head(cfg.data.train_limit)


def fit(cfg: ExperimentConfig, ds: Dataset) -> TrainResult:
    spec = cfg.input_spec(ds.resolution)
    model = build_model(cfg.model, spec, seed=cfg.seed)
    return train(model, spec.prepare(ds.images), cfg.train)


def run(cfg: ExperimentConfig) -> dict:
    """Train and save. Returns a small summary (checkpoint, final loss, seconds)."""
    check_inputs(cfg, [cfg.data.train])
    ds = load_training_set(cfg)
    print(f"Training set {ds.name}: {len(ds):,} images at {ds.resolution}")

    result = fit(cfg, ds)
    save_model(result.trained, cfg.checkpoint_uri)

    curve = pa.table({
        "epoch": pa.array(range(1, len(result.loss_curve) + 1), pa.int64()),
        "loss_bpd": pa.array(result.loss_curve, pa.float64()),
    })
    write_table(curve, "loss_curve", cfg.output_dir)
    experiment.save_resolved(cfg)

    summary = {
        "checkpoint": cfg.checkpoint_uri,
        "final_loss_bpd": result.loss_curve[-1],
        "seconds": round(result.seconds, 3),
        "config_hash": experiment.config_hash(cfg),
    }
    io.save_state(cfg.output_dir, "train", summary)
    print(f"  Complete! {cfg.train.epochs} epochs in {result.seconds:.1f}s, final loss {summary['final_loss_bpd']:.4f} bits/dim")
    return summary


def variant(cfg: ExperimentConfig, output_dir: str, **sections) -> ExperimentConfig:
    """Copy of `cfg` writing under `output_dir`, with whole sections replaced."""
    return dataclasses.replace(cfg, output_dir=output_dir, checkpoint=None, **sections)
