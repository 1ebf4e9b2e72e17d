"""Reconstruction quality of a plain VAE vs a frequency-trained VAE.

Both models train on the same ID training set (or load from
<output_dir>/recon_<variant>/model.frl when present). Held-out ID images
are reconstructed from the posterior mean; only the image channels are
compared.
"""
import dataclasses

import pyarrow as pa
from freqreg import experiment, io
from freqreg.config import join
from freqreg.datasets import load_manifest
from freqreg.errors import ConfigError
from freqreg.experiment import ExperimentConfig
from freqreg.metrics import recon_metrics
from freqreg.models import load_model, save_model, vae_reconstruct
from experiment_utils import write_table
from nodes import train

VARIANTS = ("vanilla", "frl")


def _variant_cfg(cfg: ExperimentConfig, name: str) -> ExperimentConfig:
    freq = cfg.freq if name == "frl" else dataclasses.replace(cfg.freq, method="none")
    if name == "frl" and not freq.enabled:
        freq = dataclasses.replace(freq, method="gaussian")
    return train.variant(cfg, join(cfg.output_dir, f"recon_{name}"), freq=freq,
                         scorer="frl" if name == "frl" else "ic")


def run(cfg: ExperimentConfig) -> pa.Table:
    if cfg.model.family != "vae":
        raise ConfigError(f"reconstruction compares VAEs, not {cfg.model.family!r}")
    train.check_inputs(cfg, [cfg.data.train, cfg.data.test])
    held_out = load_manifest(cfg.data.manifest).load(cfg.data.test).head(cfg.eval.limit)
    print(f"Reconstruction on {len(held_out):,} held-out {held_out.name} images...")

    rows = []
    for name in VARIANTS:
        vcfg = _variant_cfg(cfg, name)
        if io.exists(vcfg.checkpoint_uri):
            print(f"  {name}: loading {vcfg.checkpoint_uri}")
            model = load_model(vcfg.checkpoint_uri).freeze()
        else:
            result = train.fit(vcfg, train.load_training_set(vcfg))
            save_model(result.trained, vcfg.checkpoint_uri)
            model = result.model
        images = held_out.resized(model.spec.height, model.spec.width).with_channels(model.spec.channels)
        x_hat = vae_reconstruct(model, model.spec.prepare(images.images))
        m = recon_metrics(images.images.astype("float64") / 255.0, x_hat)
        print(f"  {name}: MSE {m.mse:.5f}  MAE {m.mae:.5f}  PSNR {m.psnr:.2f} dB  SSIM {m.ssim:.4f}")
        rows.append((name, m))

    table = pa.table({
        "model": pa.array([n for n, _ in rows], pa.string()),
        "mse": pa.array([m.mse for _, m in rows], pa.float64()),
        "mae": pa.array([m.mae for _, m in rows], pa.float64()),
        "psnr": pa.array([m.psnr for _, m in rows], pa.float64()),
        "ssim": pa.array([m.ssim for _, m in rows], pa.float64()),
    })
    write_table(table, "reconstruction", cfg.output_dir)
    experiment.save_resolved(cfg)
    return table
