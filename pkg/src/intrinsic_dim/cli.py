"""Command-line entry point: ``intrinsic-dim <command> ...``.

Exit codes: 0 success, 1 runtime failure (divergence, I/O, bad checkpoint),
2 usage error (bad flags, missing data directory).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, bench, codec, es, nn, presets
from .estimator import SweepReport, TrainingSweepTask, geometric_grid, run_sweep
from .optimize import OptimizerConfig, train, write_history_csv
from .projection import ProjectionKind
from .rng import derive_seed
from .subspace import effective_params, init_subspace_model
from .tasks.mnist import MNIST_ENV, IDXError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    outputs: list = field(default_factory=list)
    version: str = __version__
    platform: dict = field(default_factory=lambda: {
        "python": platform.python_version(), "numpy": np.__version__,
        "machine": platform.machine(), "system": platform.system()})

    @property
    def digest(self) -> str:
        # outputs are excluded so files can embed the digest before they exist
        body = {"command": self.command, "config": self.config, "seeds": self.seeds,
                "version": self.version, "platform": self.platform}
        return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        data = {"command": self.command, "config": self.config, "seeds": self.seeds,
                "version": self.version, "platform": self.platform,
                "outputs": [str(p) for p in self.outputs], "digest": self.digest}
        path.write_text(json.dumps(data, indent=2, default=str))
        return path


def _manifest(args, command: str, seeds: dict) -> RunManifest:
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return RunManifest(command, config, seeds)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> list:
    try:
        vals = [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _d_auto(text: str) -> list:
    """``START:STOP[:FACTOR]`` geometric grid."""
    parts = text.split(":")
    try:
        if len(parts) not in (2, 3):
            raise ValueError
        start, stop = int(parts[0]), int(parts[1])
        factor = float(parts[2]) if len(parts) == 3 else 1.6
        return geometric_grid(start, stop, factor)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP[:FACTOR], got {text!r}") from None


def _kind(text: str) -> ProjectionKind:
    try:
        return ProjectionKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- task construction --------------------------------------------------------

def _build_task(args):
    try:
        return presets.build_task(args.task, args.arch, args.mnist_dir, args.codim,
                                  args.linear_dim, args.problem_seed, args.pixel_seed,
                                  args.label_seed, args.label_fraction)
    except (FileNotFoundError, IDXError) as exc:
        raise UsageError(f"MNIST data unavailable: {exc} (pass --mnist-dir or set {MNIST_ENV})")


def _optimizer(args, subspace: bool) -> OptimizerConfig:
    lr = args.lr
    if lr is None and subspace and args.task.startswith("mnist"):
        lr = presets.SUBSPACE_MNIST_LR
    return presets.recipe(args.task, direct=not subspace, kind=args.optimizer, learning_rate=lr, epochs=args.epochs,
                          batch_size=args.batch_size, momentum=args.momentum,
                          l2_penalty=args.l2)


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    if args.direct == (args.d is not None):
        raise UsageError("give exactly one of --direct or --d")
    task = _build_task(args)
    cfg = _optimizer(args, subspace=not args.direct)
    cfg = replace(cfg, seed=derive_seed(args.seed, "train"))
    seeds = {"seed": args.seed, "train": cfg.seed}
    if args.direct:
        model = task.init_params(derive_seed(args.seed, "theta0"))
        seeds["theta0"] = derive_seed(args.seed, "theta0")
        run_id = "direct"
    else:
        s0 = args.seed_theta0 if args.seed_theta0 is not None else derive_seed(args.seed, "theta0")
        sP = args.seed_p if args.seed_p is not None else derive_seed(args.seed, "P")
        model = init_subspace_model(task, args.proj, args.d, s0, sP)
        seeds.update(theta0=s0, P=sP)
        run_id = f"{args.proj.name.lower()}-d{args.d}"
    manifest = _manifest(args, "train", seeds)
    out = _out_dir(args)
    result = train(model, task, cfg, run_id=run_id)
    hist = out / "history.csv"
    write_history_csv([result], hist, f"manifest={manifest.digest}")
    manifest.outputs.append(hist)
    if args.checkpoint and not args.direct and not result.diverged:
        codec.save_compressed(model, args.checkpoint)
        manifest.outputs.append(Path(args.checkpoint))
    manifest.write(out)
    if result.diverged:
        print(f"run {run_id}: {result.diagnostic}", file=sys.stderr)
        return EXIT_FAIL
    val = result.final.get("val_acc")
    print(f"run {run_id}: performance={result.performance:.6f} "
          f"final_performance={result.final['performance']:.6f}"
          + (f" val_acc={val:.4f}" if val is not None else ""))
    return EXIT_OK


def _sweep_task(args):
    if args.task == "cartpole":
        cfg = _es_config(args)
        return es.ControlSweepTask(es.make_env("cartpole"), nn.parse_arch(args.arch or "fc:4-16-2"),
                                   cfg)
    task = _build_task(args)
    return TrainingSweepTask(task, _optimizer(args, subspace=True), _optimizer(args, False))


def cmd_sweep(args) -> int:
    d_values = args.d_list or args.d_auto
    if not d_values:
        raise UsageError("give --d-list or --d-auto")
    if args.runs < 1 or args.bootstrap < 1:
        raise UsageError("--runs and --bootstrap must be positive")
    task = _sweep_task(args)
    if args.baseline == "direct" and args.task == "cartpole":
        raise UsageError("control tasks need a global baseline, e.g. --baseline global:195")
    manifest = _manifest(args, "sweep", {"seed": args.seed})
    out = _out_dir(args)

    def progress(d, perfs):
        if not args.quiet:
            print(f"d={d}: " + " ".join(f"{p:.4f}" for p in perfs), flush=True)

    report = run_sweep(task, args.proj, d_values, args.runs, args.baseline, args.budget,
                       threshold_ratio=args.threshold_ratio, bootstrap=args.bootstrap,
                       seed=args.seed, jobs=args.jobs, baseline_runs=args.baseline_runs,
                       refine=not args.no_refine, max_ratio=args.max_ratio, progress=progress)
    report.manifest_digest = manifest.digest
    paths = [out / "report.json", out / "runs.csv", out / "plot.csv"]
    report.write_json(paths[0])
    report.write_runs_csv(paths[1])
    report.write_plot_csv(paths[2])
    manifest.outputs.extend(paths)
    manifest.write(out)
    _print_report(report)
    return EXIT_OK


def _print_report(report: SweepReport):
    d90 = report.d_int90 if report.d_int90 is not None else "not reached"
    print(f"baseline={report.baseline:.6f} threshold={report.threshold:.6f}")
    print(f"d_int90={d90} bootstrap_std={report.d_int90_std:.3f} "
          f"(samples={report.bootstrap_samples}, missing={report.bootstrap_missing})")
    d100 = report.d_int100 if report.d_int100 is not None else "not reached"
    print(f"d_int100={d100}")


def cmd_compress(args) -> int:
    """Report sizes of an existing checkpoint, or re-save it to ``--output``."""
    try:
        sm = codec.load_compressed(args.checkpoint)
    except (OSError, codec.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    summary = codec.compression_summary(sm)
    if args.output:
        summary["written_bytes"] = codec.save_compressed(sm, args.output)
    summary.update(descriptor=sm.descriptor, kind=sm.projection.kind.name.lower(), D=sm.D,
                   d=sm.d)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_eval_checkpoint(args) -> int:
    try:
        sm = codec.load_compressed(args.checkpoint)
    except (OSError, codec.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if isinstance(sm.arch, nn.Architecture):
        args.arch = sm.descriptor
        task = _build_task(args)
    else:
        task = sm.arch
    if task.param_count() != sm.D:
        raise UsageError(f"checkpoint D={sm.D} does not match task {args.task}")
    metrics = task.evaluate(effective_params(sm))
    metrics.update(codec.compression_summary(sm))
    print(json.dumps(metrics, indent=2))
    return EXIT_OK


def _es_config(args) -> es.ESConfig:
    opt = OptimizerConfig("adam", learning_rate=args.es_lr)
    return es.ESConfig(population=args.population, sigma=args.sigma, optimizer=opt,
                       iterations=args.iterations, l2_penalty=args.es_l2,
                       eval_episodes=args.eval_episodes, seed=args.seed)


def cmd_es(args) -> int:
    env = es.make_env(args.env)
    arch = nn.parse_arch(args.arch or "fc:4-16-2")
    if arch.n_inputs != env.obs_dim or arch.n_classes != env.n_actions:
        raise UsageError(f"{arch.descriptor} does not fit {env.name}")
    cfg = _es_config(args)
    s0, sP = derive_seed(args.seed, "theta0"), derive_seed(args.seed, "P")
    sm = init_subspace_model(arch, args.proj, args.d, s0, sP)
    manifest = _manifest(args, "es", {"seed": args.seed, "theta0": s0, "P": sP})
    out = _out_dir(args)
    result = es.train_es(sm, env, cfg, eval_every=args.eval_every, solved=args.solved)
    path = out / "es_history.csv"
    es.write_es_csv(result, path, f"manifest={manifest.digest}")
    manifest.outputs.append(path)
    if args.checkpoint:
        codec.save_compressed(sm, args.checkpoint)
        manifest.outputs.append(Path(args.checkpoint))
    manifest.write(out)
    solved = f" solved_at={result.solved_at}" if result.solved_at is not None else ""
    print(f"d={args.d}: best_reward={result.best_reward:.2f}{solved} "
          f"wall={result.wall_time:.1f}s")
    return EXIT_OK


def cmd_bench_proj(args) -> int:
    rows = bench.bench_projections(args.D, args.kinds, args.ratio, args.reps, args.mem_budget)
    manifest = _manifest(args, "bench-proj", {})
    out = _out_dir(args)
    path = out / "bench.csv"
    with open(path, "w") as fh:
        fh.write(f"# manifest={manifest.digest}\n")
        keys = list(rows[0].keys())
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(str(r[k]) for k in keys) + "\n")
    manifest.outputs.append(path)
    manifest.write(out)
    print(bench.format_table(rows))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _task_flags(p, default_task="toy", tasks=presets.TASKS):
    p.add_argument("--task", choices=tasks, default=default_task)
    p.add_argument("--arch", help="architecture descriptor, e.g. fc:784-200-200-10")
    p.add_argument("--mnist-dir", help=f"directory with MNIST IDX files (else ${MNIST_ENV})")
    p.add_argument("--codim", type=int, default=10, help="linear task: solution codimension")
    p.add_argument("--linear-dim", type=int, default=200, help="linear task: D")
    p.add_argument("--problem-seed", type=int, default=0)
    p.add_argument("--pixel-seed", type=int, default=0)
    p.add_argument("--label-seed", type=int, default=0)
    p.add_argument("--label-fraction", type=float, default=1.0)


def _optim_flags(p):
    p.add_argument("--optimizer", choices=("sgd", "momentum", "adam"))
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)


def _es_flags(p):
    p.add_argument("--population", type=int, default=64)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--es-lr", type=float, default=0.3)
    p.add_argument("--es-l2", type=float, default=1e-8)
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--eval-episodes", type=int, default=30)


def _common(p, command):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=f"runs/{command}", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intrinsic-dim",
                                     description="Random subspace training and d_int90 sweeps.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="one direct or subspace training run")
    _task_flags(p)
    _optim_flags(p)
    _common(p, "train")
    p.add_argument("--direct", action="store_true", help="train all D parameters")
    p.add_argument("--proj", type=_kind, default=ProjectionKind.DENSE)
    p.add_argument("--d", type=int, help="subspace dimension")
    p.add_argument("--seed-theta0", type=int)
    p.add_argument("--seed-p", type=int)
    p.add_argument("--checkpoint", help="write a seed-tuple checkpoint here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="measure d_int90 over a grid of d")
    _task_flags(p, tasks=presets.TASKS + ("cartpole",))
    _optim_flags(p)
    _es_flags(p)
    _common(p, "sweep")
    p.add_argument("--proj", type=_kind, default=ProjectionKind.DENSE)
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--d-list", type=_int_list, help="comma-separated d values")
    grid.add_argument("--d-auto", type=_d_auto, help="geometric grid START:STOP[:FACTOR]")
    p.add_argument("--runs", type=int, default=3, help="runs per d")
    p.add_argument("--bootstrap", type=int, default=50, help="bootstrap samples")
    p.add_argument("--baseline", default="direct", help="'direct' or 'global:VALUE'")
    p.add_argument("--baseline-runs", type=int, default=1)
    p.add_argument("--threshold-ratio", type=float, default=0.9)
    p.add_argument("--budget", type=int, help="maximum number of subspace runs")
    p.add_argument("--no-refine", action="store_true", help="skip refinement near the crossing")
    p.add_argument("--max-ratio", type=float, default=1.5,
                   help="refine until neighbouring d differ by at most this factor")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compress", help="report (and optionally rewrite) a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--output")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("eval-checkpoint", help="evaluate a seed-tuple checkpoint")
    p.add_argument("checkpoint")
    _task_flags(p, default_task="mnist")
    p.set_defaults(func=cmd_eval_checkpoint)

    p = sub.add_parser("es", help="evolution strategies in a random subspace")
    p.add_argument("--env", choices=sorted(es.ENVIRONMENTS), default="cartpole")
    p.add_argument("--arch", help="policy descriptor (default fc:4-16-2)")
    p.add_argument("--proj", type=_kind, default=ProjectionKind.DENSE)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--solved", type=float, default=195.0)
    p.add_argument("--checkpoint")
    _es_flags(p)
    _common(p, "es")
    p.set_defaults(func=cmd_es)

    p = sub.add_parser("bench-proj", help="time project+adjoint for each projection kind")
    p.add_argument("--D", type=_int_list, default=[100_000, 1_000_000],
                   help="comma-separated D values")
    p.add_argument("--kinds", type=lambda s: s.split(","), default=["dense", "sparse", "fastfood"])
    p.add_argument("--ratio", type=float, default=0.01, help="d as a fraction of D")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--mem-budget", type=float, default=4e9, help="bytes")
    p.add_argument("--out", default="runs/bench-proj")
    p.set_defaults(func=cmd_bench_proj)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    start = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if getattr(args, "quiet", False) is False:
        print(f"done in {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
