"""Score the ID test set and every OOD set, then report AUROC, histograms and throughput.

- Loads the checkpoint and checks it against the config (family, input spec)
- Scores ID first, timing that pass for throughput (data loading excluded)
- Labels records ID / OOD, calibrates the threshold at `eval.tpr` of ID
- Writes scores.csv, auroc.csv (with Average), histogram.csv,
  throughput.json and eval_report.json
"""
import numpy as np
import pyarrow as pa
from freqreg import experiment, io, metrics
from freqreg.config import join
from freqreg.datasets import Dataset, load_manifest
from freqreg.errors import ConfigError, FrequencyMismatchError
from freqreg.experiment import ExperimentConfig
from freqreg.models import GenerativeModel, load_model
from freqreg.scoring import (
    check_compatible,
    calibrate_threshold,
    label_records,
    records_to_table,
    score_dataset,
    threshold_classify,
)
from experiment_utils import write_table
from nodes.train import check_inputs


def load_scoring_model(cfg: ExperimentConfig, checkpoint: str | None = None) -> GenerativeModel:
    """Frozen float64 model from the checkpoint, after checking it matches `cfg`."""
    model = load_model(checkpoint or cfg.checkpoint_uri)
    if model.family != cfg.model.family:
        raise ConfigError(f"checkpoint holds a {model.family!r} model but model.family is {cfg.model.family!r}")
    if model.spec.quant_levels != cfg.model.quant_levels:
        raise ConfigError(
            f"checkpoint quant_levels={model.spec.quant_levels} != model.quant_levels={cfg.model.quant_levels}"
        )
    if model.spec.freq.fingerprint() != cfg.freq.fingerprint():
        raise FrequencyMismatchError(
            f"checkpoint was trained with {model.spec.freq.fingerprint()}, config says {cfg.freq.fingerprint()}"
        )
    return model.freeze()


def load_eval_sets(cfg: ExperimentConfig, model: GenerativeModel) -> tuple[Dataset, list[Dataset]]:
    """ID test set and OOD sets, resized to the model's resolution and capped at `eval.limit`."""
    h, w = model.spec.height, model.spec.width
    resolution = (h, w, model.spec.channels)
    id_ds = load_manifest(cfg.data.manifest).load(cfg.data.test, resolution)
    ood_manifest = load_manifest(cfg.data.ood_manifest or cfg.data.manifest)
    oods = [ood_manifest.load(name, resolution) for name in cfg.data.ood]
    sets = [id_ds, *oods]
    sets = [ds.head(cfg.eval.limit).resized(h, w) for ds in sets]
    return sets[0], sets[1:]


def _histogram_table(hist: metrics.Histogram) -> pa.Table:
    rows = {"dataset": [], "bin": [], "bin_lo": [], "bin_hi": [], "count": []}
    for name, counts in hist.counts.items():
        for b, c in enumerate(counts):
            rows["dataset"].append(name)
            rows["bin"].append(b)
            rows["bin_lo"].append(float(hist.edges[b]))
            rows["bin_hi"].append(float(hist.edges[b + 1]))
            rows["count"].append(int(c))
    return pa.table({
        "dataset": pa.array(rows["dataset"], pa.string()),
        "bin": pa.array(rows["bin"], pa.int64()),
        "bin_lo": pa.array(rows["bin_lo"], pa.float64()),
        "bin_hi": pa.array(rows["bin_hi"], pa.float64()),
        "count": pa.array(rows["count"], pa.int64()),
    })


def evaluate(cfg: ExperimentConfig, model: GenerativeModel, scorer: str | None = None,
             weight: float | None = None, output_dir: str | None = None) -> dict:
    """Score, aggregate and (when `output_dir` is given) write every table.

    Returns the report dict; `average_auroc` is the unweighted mean over OOD sets.
    """
    scorer = scorer or cfg.scorer
    check_compatible(scorer, model)
    opts = cfg.scoring_options(weight)
    workers = cfg.eval.workers
    id_ds, oods = load_eval_sets(cfg, model)
    if not oods:
        raise ConfigError("data.ood names no OOD sets to evaluate against")

    timed: dict = {}

    def score_id(images):
        timed["records"] = score_dataset(scorer, model, Dataset(id_ds.name, images), workers, **opts)

    tp = metrics.throughput(score_id, id_ds.images, warmup=cfg.eval.warmup)
    id_records = label_records(timed["records"], "ID")
    ood_records = {
        ds.name: label_records(score_dataset(scorer, model, ds, workers, **opts), "OOD") for ds in oods
    }
    id_scores = np.array([r.score for r in id_records])
    ood_scores = {name: np.array([r.score for r in recs]) for name, recs in ood_records.items()}

    hist = metrics.histogram({id_ds.name: id_scores, **ood_scores}, bins=cfg.eval.bins)
    aurocs = {name: metrics.auroc(id_scores, s) for name, s in ood_scores.items()}
    overlaps = {name: metrics.histogram_overlap(hist.counts[id_ds.name], hist.counts[name]) for name in ood_scores}
    average = float(np.mean(list(aurocs.values())))

    lam = calibrate_threshold(id_scores, cfg.eval.tpr)
    flagged = {
        name: float(np.mean([lbl == "OOD" for lbl in threshold_classify(s, lam)]))
        for name, s in {id_ds.name: id_scores, **ood_scores}.items()
    }

    report = {
        "scorer": scorer,
        "weight": opts["weight"],
        "id_dataset": id_ds.name,
        "auroc": {**aurocs, "Average": average},
        "average_auroc": average,
        "histogram_overlap": overlaps,
        "threshold": {"lambda": lam, "tpr": cfg.eval.tpr, "flagged_ood": flagged},
        "throughput": {
            "images": tp.images,
            "seconds": tp.seconds,
            "images_per_sec": tp.images_per_sec,
            "sec_per_image": tp.sec_per_image,
            "peak_rss_mb": tp.peak_rss_mb,
            "includes_data_loading": False,
        },
        "histogram": {
            "edges": hist.edges.tolist(),
            "counts": {name: c.tolist() for name, c in hist.counts.items()},
        },
    }

    for name, value in aurocs.items():
        print(f"  {name}: AUROC {value:.4f} (overlap {overlaps[name]:.3f})")
    print(f"  Average: AUROC {average:.4f} | {tp.images_per_sec:.1f} img/s")

    if output_dir:
        all_records = id_records + [r for recs in ood_records.values() for r in recs]
        write_table(records_to_table(all_records), "scores", output_dir)
        names = list(aurocs)
        write_table(pa.table({
            "dataset": pa.array(names + ["Average"], pa.string()),
            "auroc": pa.array([aurocs[n] for n in names] + [average], pa.float64()),
            "n_id": pa.array([len(id_records)] * (len(names) + 1), pa.int64()),
            "n_ood": pa.array([len(ood_records[n]) for n in names] + [sum(len(r) for r in ood_records.values())],
                              pa.int64()),
            "overlap": pa.array([overlaps[n] for n in names] + [float(np.mean(list(overlaps.values())))],
                                pa.float64()),
        }), "auroc", output_dir)
        write_table(_histogram_table(hist), "histogram", output_dir)
        io.save_json(report["throughput"], join(output_dir, "throughput.json"))
        io.save_json(report, join(output_dir, "eval_report.json"))
    return report


def run(cfg: ExperimentConfig, checkpoint: str | None = None) -> dict:
    """cmd_eval: evaluate the configured checkpoint and write the report files."""
    check_inputs(cfg, [cfg.data.test])
    if cfg.data.ood_manifest:
        check_inputs(cfg, list(cfg.data.ood), cfg.data.ood_manifest)
    else:
        check_inputs(cfg, list(cfg.data.ood))
    trained = io.load_state(cfg.output_dir, "train")
    if trained.get("config_hash") and trained["config_hash"] != experiment.config_hash(cfg):
        print("  Note: checkpoint was trained under a different config hash")

    print(f"Evaluating {cfg.scorer} scorer ({cfg.model.family}, freq={cfg.freq.method})...")
    model = load_scoring_model(cfg, checkpoint)
    report = evaluate(cfg, model, output_dir=cfg.output_dir)
    experiment.save_resolved(cfg)
    return {"average_auroc": report["average_auroc"], "auroc": report["auroc"]}
