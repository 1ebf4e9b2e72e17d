"""freqreg command line: train, eval, ablation sweeps, recon and fixtures.

    python src/main.py train --config configs/toy.json --freq.kernel_size=5
    python src/main.py eval --config configs/toy.json --ood-manifest ood.json
    python src/main.py ablate-weight --config configs/toy.json --weights 0,0.5,1

Unrecognized `--a.b=value` flags override config keys.
"""
import argparse
import sys

from freqreg import debug, experiment
from freqreg.config import get_log_dir, get_output_dir, is_memory_profiling
from freqreg.errors import FreqRegError
from freqreg.profiling import MemoryProfiler


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqreg", description="Frequency-regularized OOD detection experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="Experiment config JSON (defaults when omitted)")
        p.add_argument("--parallel", type=int, default=None, help="Worker processes (else FRL_PARALLELISM)")
        return p

    command("train", "Train a model and write checkpoint, loss curve and resolved config")
    p = command("eval", "Score ID and OOD sets; write AUROC, scores, histogram and throughput")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--ood-manifest", default=None, help="Manifest holding the OOD sets")
    p = command("ablate-weight", "Average AUROC per high-frequency weight (VAE, inference only)")
    p.add_argument("--weights", type=_floats, default=[0.0, 0.5, 1.0, 1.5, 2.0])
    p = command("ablate-kernel", "Retrain and evaluate per Gaussian kernel size")
    p.add_argument("--kernel-sizes", type=_ints, default=[3, 5, 7, 9])
    p = command("ablate-freqform", "Retrain and evaluate per high-frequency form, plus the IC baseline")
    p.add_argument("--methods", type=_strs, default=["gaussian", "fft", "haar"])
    command("recon", "Reconstruction metrics of a plain VAE vs a frequency-trained VAE")
    p = sub.add_parser("fixtures", help="Write complexity PPMs, a toy IDX dataset, manifest and config")
    p.add_argument("--out", default="fixtures")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _dispatch(args, cfg) -> None:
    from nodes import ablate, evaluate, recon, train

    if args.command == "train":
        train.run(cfg)
    elif args.command == "eval":
        evaluate.run(cfg, args.checkpoint)
    elif args.command == "ablate-weight":
        ablate.run_weight(cfg, args.weights, args.parallel)
    elif args.command == "ablate-kernel":
        ablate.run_kernel(cfg, args.kernel_sizes, args.parallel)
    elif args.command == "ablate-freqform":
        ablate.run_freqform(cfg, args.methods, args.parallel)
    elif args.command == "recon":
        recon.run(cfg)


def _load(args, extra: list[str]):
    overrides = experiment.parse_overrides(extra)
    if getattr(args, "ood_manifest", None):
        overrides["data.ood_manifest"] = args.ood_manifest
    if args.parallel is not None and args.command == "eval":
        overrides.setdefault("eval.workers", str(args.parallel))
    return experiment.load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args, extra = build_parser().parse_known_args(argv)
    try:
        if args.command == "fixtures":
            from nodes import fixtures
            if extra:
                raise ValueError(f"fixtures takes no config overrides, got {extra}")
            fixtures.run(get_output_dir(args.out), args.seed)
            return 0
        cfg = _load(args, extra)
    except (FreqRegError, ValueError, FileNotFoundError, RuntimeError) as e:
        print(f"Error: {e}")
        return 1

    debug.configure(cfg.output_dir)
    debug.log_run_start(args.command)
    profiler = MemoryProfiler(log_dir=get_log_dir(cfg.output_dir)) if is_memory_profiling() else None
    if profiler:
        profiler.start()
    try:
        _dispatch(args, cfg)
    except (FreqRegError, ValueError, FileNotFoundError, RuntimeError) as e:
        debug.log_run_end(args.command, status="failed", error=e)
        print(f"Error: {e}")
        return 1
    except Exception as e:
        debug.log_run_end(args.command, status="failed", error=e)
        raise
    finally:
        if profiler:
            profiler.stop()
            print(f"  Peak RSS {profiler.peak_rss_mb:.1f} MB")
    debug.log_run_end(args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
