"""Ablation sweeps: high-frequency weight, Gaussian kernel size, high-frequency form.

The weight sweep reuses one trained checkpoint (the weight only matters at
scoring time). Kernel and form sweeps retrain one model per variant. Every
sweep is a DAG of named tasks (`train:<variant>` -> `eval:<variant>` ->
`summarize`) run by the orchestrator, with run.json next to the sweep CSV so
an interrupted sweep resumes.
"""
import dataclasses
import time

import pyarrow as pa
from freqreg import experiment
from freqreg.config import join
from freqreg.errors import ConfigError, FrequencyMismatchError
from freqreg.experiment import ExperimentConfig
from freqreg.frequency import METHODS
from freqreg.orchestrator import DAG
from experiment_utils import write_table
from nodes import evaluate, train


def _run_dag(tasks: dict, cfg: ExperimentConfig, name: str, parallel: int | None) -> dict:
    dag = DAG(tasks, state_path=join(cfg.output_dir, "run.json"), name=name)
    dag.run(parallel)
    return dag.results


def _eval_task(variant_cfg: ExperimentConfig, scorer: str):
    def task(results: dict) -> dict:
        model = evaluate.load_scoring_model(variant_cfg)
        report = evaluate.evaluate(variant_cfg, model, scorer=scorer, output_dir=variant_cfg.output_dir)
        return {"average_auroc": report["average_auroc"], "auroc": report["auroc"]}
    return task


def _train_task(variant_cfg: ExperimentConfig):
    def task(results: dict) -> dict:
        return train.run(variant_cfg)
    return task


# =============================================================================
# Weight sweep (inference only)
# =============================================================================

def run_weight(cfg: ExperimentConfig, weights: list[float], parallel: int | None = None) -> pa.Table:
    """cmd_ablate_weight: average AUROC per high-frequency weight for one trained VAE."""
    if cfg.model.family != "vae":
        raise ConfigError(f"the weight ablation needs a VAE checkpoint, not {cfg.model.family!r}")
    if not cfg.freq.enabled:
        raise FrequencyMismatchError("the weight ablation needs a frequency-trained VAE")
    if not weights:
        raise ConfigError("no weights given")
    if any(w < 0 for w in weights):
        raise ConfigError(f"weights must be >= 0, got {weights}")
    train.check_inputs(cfg, [cfg.data.test, *cfg.data.ood])
    model = evaluate.load_scoring_model(cfg)
    print(f"Weight sweep over {weights} ({cfg.model.family}, freq={cfg.freq.method})...")

    def weight_task(w: float):
        def task(results: dict) -> dict:
            start = time.perf_counter()
            report = evaluate.evaluate(cfg, model, scorer="frl", weight=w)
            return {"weight": w, "average_auroc": report["average_auroc"], "seconds": time.perf_counter() - start}
        return task

    tasks = {f"eval:w={w:g}": (weight_task(float(w)), []) for w in weights}

    def summarize(results: dict) -> dict:
        rows = [results[f"eval:w={w:g}"] for w in weights]
        table = pa.table({
            "weight": pa.array([r["weight"] for r in rows], pa.float64()),
            "average_auroc": pa.array([r["average_auroc"] for r in rows], pa.float64()),
            "seconds": pa.array([r["seconds"] for r in rows], pa.float64()),
        })
        write_table(table, "weight_sweep", cfg.output_dir)
        return {"rows": len(rows)}

    tasks["summarize"] = (summarize, list(tasks))
    results = _run_dag(tasks, cfg, "weight_sweep", parallel)
    experiment.save_resolved(cfg)
    return _rows_table(results, [f"eval:w={w:g}" for w in weights], "weight")


# =============================================================================
# Kernel sweep (retrains)
# =============================================================================

def run_kernel(cfg: ExperimentConfig, kernel_sizes: list[int], parallel: int | None = None) -> pa.Table:
    """cmd_ablate_kernel: retrain and evaluate one Gaussian-FRL model per kernel size."""
    if not kernel_sizes:
        raise ConfigError("no kernel sizes given")
    even = [k for k in kernel_sizes if k < 1 or k % 2 == 0]
    if even:
        raise ConfigError(f"kernel sizes must be odd and positive, got {even}")
    train.check_inputs(cfg, [cfg.data.train, cfg.data.test, *cfg.data.ood])
    print(f"Kernel sweep over {kernel_sizes}...")

    tasks: dict = {}
    for k in kernel_sizes:
        freq = dataclasses.replace(cfg.freq, method="gaussian", kernel_size=k, sigma=None)
        vcfg = train.variant(cfg, join(cfg.output_dir, f"kernel_{k}"), freq=freq, scorer="frl")
        tasks[f"train:k={k}"] = (_train_task(vcfg), [])
        tasks[f"eval:k={k}"] = (_eval_task(vcfg, "frl"), [f"train:k={k}"])

    def summarize(results: dict) -> dict:
        table = pa.table({
            "kernel_size": pa.array(kernel_sizes, pa.int64()),
            "average_auroc": pa.array([results[f"eval:k={k}"]["average_auroc"] for k in kernel_sizes], pa.float64()),
            "final_loss_bpd": pa.array([results[f"train:k={k}"]["final_loss_bpd"] for k in kernel_sizes],
                                       pa.float64()),
        })
        write_table(table, "kernel_sweep", cfg.output_dir)
        values = table.column("average_auroc").to_pylist()
        spread = max(values) - min(values)
        print(f"  AUROC spread across kernel sizes: {spread:.4f}")
        return {"spread": spread}

    tasks["summarize"] = (summarize, [f"eval:k={k}" for k in kernel_sizes])
    results = _run_dag(tasks, cfg, "kernel_sweep", parallel)
    experiment.save_resolved(cfg)
    return _rows_table(results, [f"eval:k={k}" for k in kernel_sizes], "kernel_size", kernel_sizes)


# =============================================================================
# High-frequency form sweep (retrains)
# =============================================================================

def run_freqform(cfg: ExperimentConfig, methods: list[str], parallel: int | None = None) -> pa.Table:
    """cmd_ablate_freqform: one model per method plus a plain-model `none` (IC) row."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown high-frequency methods {unknown}; expected a subset of {METHODS}")
    if not methods:
        raise ConfigError("no methods given")
    train.check_inputs(cfg, [cfg.data.train, cfg.data.test, *cfg.data.ood])
    print(f"High-frequency form sweep over none + {methods}...")

    rows = [("none", "ic")] + [(m, "frl") for m in dict.fromkeys(methods)]
    tasks: dict = {}
    for method, scorer in rows:
        freq = dataclasses.replace(cfg.freq, method=method)
        vcfg = train.variant(cfg, join(cfg.output_dir, f"freqform_{method}"), freq=freq, scorer=scorer)
        tasks[f"train:{method}"] = (_train_task(vcfg), [])
        tasks[f"eval:{method}"] = (_eval_task(vcfg, scorer), [f"train:{method}"])

    def summarize(results: dict) -> dict:
        ood_names = list(cfg.data.ood)
        columns = {
            "method": pa.array([m for m, _ in rows], pa.string()),
            "scorer": pa.array([s for _, s in rows], pa.string()),
            "average_auroc": pa.array([results[f"eval:{m}"]["average_auroc"] for m, _ in rows], pa.float64()),
        }
        for name in ood_names:
            columns[f"auroc_{name}"] = pa.array([results[f"eval:{m}"]["auroc"][name] for m, _ in rows], pa.float64())
        write_table(pa.table(columns), "freqform_sweep", cfg.output_dir)
        return {"rows": len(rows)}

    tasks["summarize"] = (summarize, [f"eval:{m}" for m, _ in rows])
    results = _run_dag(tasks, cfg, "freqform_sweep", parallel)
    experiment.save_resolved(cfg)
    return _rows_table(results, [f"eval:{m}" for m, _ in rows], "method", [m for m, _ in rows])


def _rows_table(results: dict, task_ids: list[str], key: str, keys: list | None = None) -> pa.Table:
    """In-memory summary of a sweep (the CSV written by `summarize` holds the same rows)."""
    keys = keys if keys is not None else [results[t].get(key) for t in task_ids]
    return pa.table({key: keys, "average_auroc": pa.array([results[t]["average_auroc"] for t in task_ids], pa.float64())})
