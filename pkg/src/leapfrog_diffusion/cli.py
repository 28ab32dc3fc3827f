"""Command-line entry point: ``leapfrog-diffusion <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.  Every failure prints a one-line diagnostic to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing as mp
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, documented_defaults
from .data import read_scenes, split, write_scenes
from .data.synthetic import generate_synthetic
from .errors import ConfigError, DataError, NumericalError
from .eval import benchmark, evaluate, write_report
from .inference import BatchPrediction, read_predictions, write_predictions
from .numerics import DimensionError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
logger = logging.getLogger("leapfrog_diffusion")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--workers", type=int, default=1, help="parallel scene workers for sampling")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="leapfrog-diffusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic scene CSV")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--train-out", help="also write the train split here")
    p.add_argument("--test-out", help="also write the test split here")

    p = sub.add_parser("train-denoiser", help="stage 1: train the denoiser")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", help="JSON-lines training report")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("train-initializer", help="stage 2: train the leapfrog initializer")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--denoiser-ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--tau", type=int)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("predict", help="sample futures for every scene")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--denoiser-ckpt", required=True)
    p.add_argument("--initializer-ckpt")
    p.add_argument("--sampler", choices=("leapfrog", "standard", "iid"), default="leapfrog")
    p.add_argument("--tau", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a prediction file")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="sweep leapfrog steps against the full chain")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--denoiser-ckpt", required=True)
    p.add_argument(
        "--initializer-ckpt",
        action="append",
        default=[],
        required=True,
        help="repeatable; a checkpoint trained at tau is used for that tau, the first one otherwise",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--no-standard", action="store_true", help="skip the full-chain row")
    p.add_argument("--no-iid", action="store_true", help="skip the i.i.d. initialization rows")

    p = sub.add_parser("selftest", help="run the built-in oracle and invariant checks")
    _common(p)
    p.add_argument("--quick", action="store_true", help="skip the slower checks")

    p = sub.add_parser("defaults", help="print every config key with its default")
    return parser


# ---------------------------------------------------------------- helpers


def _load_config(args) -> Config:
    cfg = Config.load(args.config) if getattr(args, "config", None) else Config()
    cfg.apply_overrides(getattr(args, "set", []))
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    if getattr(args, "workers", 1) < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg


def header_lines(cfg: Config, command: str) -> list[str]:
    return [
        f"leapfrog-diffusion {__version__} {command}",
        f"seed={cfg['seed']}",
        f"config_hash={cfg.digest()}",
        *(f"config {line}" for line in cfg.lines()),
    ]


def _read(path):
    if not Path(path).exists():
        raise DataError(f"no such file: {path}")
    return read_scenes(path)


def _estimator(cfg: Config, denoiser_ckpt, initializer_ckpt=None):
    est = cfg.estimator()
    for p in (denoiser_ckpt, initializer_ckpt):
        if p is not None and not Path(p).exists():
            raise DataError(f"no such checkpoint: {p}")
    est.load_denoiser(denoiser_ckpt)
    if initializer_ckpt is not None:
        est.load_initializer(initializer_ckpt)
    return est


def _write_jsonl(path, cfg: Config, command: str, records) -> None:
    head = {"header": {"tool": f"leapfrog-diffusion {__version__}", "command": command, "seed": cfg["seed"],
                       "config_hash": cfg.digest(), "config": dict(cfg.values)}}
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(head, sort_keys=True, default=list) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


_WORKER_STATE: dict = {}


def _worker_sample(task):
    scenes, kwargs = task
    return _WORKER_STATE["est"].sample(scenes, **kwargs)


def parallel_sample(est, scenes, workers: int = 1, **kwargs) -> BatchPrediction:
    """Sample with ``workers`` forked processes.  Noise is keyed per scene,
    so the result does not depend on the worker count."""
    if workers <= 1 or len(scenes) < 2:
        return est.sample(scenes, **kwargs)
    parts = np.array_split(np.arange(len(scenes)), min(workers, len(scenes)))
    _WORKER_STATE["est"] = est
    try:
        with ProcessPoolExecutor(len(parts), mp_context=mp.get_context("fork")) as pool:
            results = list(pool.map(_worker_sample, [(scenes.subset(p), kwargs) for p in parts]))
    finally:
        _WORKER_STATE.clear()
    return BatchPrediction.concat(results)


# ---------------------------------------------------------------- commands


def cmd_gen_data(args, cfg: Config) -> None:
    scenes = generate_synthetic(cfg.gen_config())
    heads = header_lines(cfg, "gen-data")
    write_scenes(scenes, args.out, heads)
    if args.train_out or args.test_out:
        if not (args.train_out and args.test_out):
            raise ConfigError("--train-out and --test-out go together")
        train, test = split(scenes, cfg["data.train_frac"], seed=cfg["seed"])
        write_scenes(train, args.train_out, heads)
        write_scenes(test, args.test_out, heads)
    print(f"wrote {len(scenes)} scenes to {args.out}")


def cmd_train_denoiser(args, cfg: Config) -> None:
    scenes = _read(args.data)
    est = cfg.estimator()
    est.fit_denoiser(scenes, epochs=args.epochs)
    est.save_denoiser(args.out)
    if args.report:
        _write_jsonl(args.report, cfg, "train-denoiser", _untimed(est.stage1_report_.records()))
    print(f"stage 1 done: final loss {est.stage1_report_.losses[-1]:.6g}, checkpoint {args.out}")


def _untimed(records):
    # wall-clock kept in the log, not the artifact, so reruns match byte for byte
    return [{k: v for k, v in r.items() if k != "wall_s"} for r in records]


def cmd_train_initializer(args, cfg: Config) -> None:
    scenes = _read(args.data)
    est = _estimator(cfg, args.denoiser_ckpt)
    est.fit_initializer(scenes, tau=args.tau, epochs=args.epochs)
    est.save_initializer(args.out)
    if args.report:
        _write_jsonl(args.report, cfg, "train-initializer", _untimed(est.stage2_report_.records()))
    print(f"stage 2 done: final loss {est.stage2_report_.losses[-1]:.6g}, checkpoint {args.out}")


def cmd_predict(args, cfg: Config) -> None:
    scenes = _read(args.data)
    if args.sampler == "leapfrog" and not args.initializer_ckpt:
        raise ConfigError("--sampler leapfrog needs --initializer-ckpt")
    est = _estimator(cfg, args.denoiser_ckpt, args.initializer_ckpt if args.sampler == "leapfrog" else None)
    tau = cfg["diffusion.tau"] if args.tau is None and args.sampler == "iid" else args.tau
    pred = parallel_sample(est, scenes, args.workers, sampler=args.sampler, tau=tau, K=args.K, seed=cfg["seed"])
    write_predictions(pred, args.out, header_lines(cfg, "predict"))
    print(f"wrote {len(pred)} x {pred.trajectories.shape[1]} samples ({pred.denoiser_calls} calls per scene) to {args.out}")


def cmd_eval(args, cfg: Config) -> None:
    scenes = _read(args.data)
    ids, traj = read_predictions(args.predictions)
    sampler, calls = "unknown", 0
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# sampler="):
                fields = dict(kv.split("=", 1) for kv in line[2:].split())
                sampler, calls = fields["sampler"], int(fields["calls_per_scene"])
                break
    by_id = {int(i): n for n, i in enumerate(ids)}
    missing = [s for s in scenes.ids if s not in by_id]
    if missing:
        raise DataError(f"no predictions for scene {missing[0]}")
    order = [by_id[s] for s in scenes.ids]
    pred = BatchPrediction(traj[order], np.asarray(scenes.ids), sampler, calls, cfg["seed"], 0)
    rep = evaluate(pred, scenes, cfg["eval.threshold"])
    write_report([rep], args.out, header_lines(cfg, "eval"), include_timing=False)
    print(f"{sampler}: minADE {rep.min_ade[-1]:.4f} minFDE {rep.min_fde[-1]:.4f} -> {args.out}")


def bench_specs(est, initializers: dict, taus, standard=True, iid=True) -> list[dict]:
    """Sampler specs for the sweep; ``initializers`` maps trained tau to an estimator."""
    first = next(iter(initializers.values()))
    specs = [] if not standard else [{"sampler": "standard", "estimator": est, "label": "standard"}]
    for tau in taus:
        specs.append({"sampler": "leapfrog", "tau": tau, "estimator": initializers.get(tau, first)})
    if iid:
        specs += [{"sampler": "iid", "tau": tau, "estimator": est} for tau in taus]
    return specs


def cmd_bench(args, cfg: Config) -> None:
    scenes = _read(args.data)
    base = _estimator(cfg, args.denoiser_ckpt)
    inits = {}
    for path in args.initializer_ckpt:
        est = _estimator(cfg, args.denoiser_ckpt, path)
        inits.setdefault(est.trained_tau_, est)
    Ks = {e.n_samples for e in inits.values()}
    if len(Ks) > 1:
        raise ConfigError(f"initializer checkpoints disagree on K: {sorted(Ks)}")
    K = Ks.pop()
    base.n_samples = K
    specs = bench_specs(base, inits, cfg.int_list("eval.taus"), not args.no_standard, not args.no_iid)
    seeds = cfg.int_list("eval.seeds")
    if args.workers > 1:
        reports = _parallel_bench(specs, scenes, K, seeds, cfg["eval.threshold"], args.workers)
    else:
        reports = benchmark(base, scenes, specs, K=K, seeds=seeds, threshold=cfg["eval.threshold"])
    write_report(reports, args.out, header_lines(cfg, "bench") + ["calls = network forward passes per scene"])
    for r in reports:
        cov = "" if r.coverage is None else f" coverage {r.coverage:.3f}"
        print(f"{r.sampler_id:16s} calls {r.calls:4d} minADE {r.min_ade[-1]:.4f} minFDE {r.min_fde[-1]:.4f}{cov} {r.wall_ns_mean / 1e6:.2f} ms/scene")


class _PooledEstimator:
    """Adapter so :func:`benchmark` samples through the worker pool."""

    def __init__(self, est, workers):
        self.est, self.workers = est, workers
        self.diffusion_steps = est.diffusion_steps

    def sample(self, scenes, **kwargs):
        return parallel_sample(self.est, scenes, self.workers, **kwargs)


def _parallel_bench(specs, scenes, K, seeds, threshold, workers):
    pooled = [dict(s, estimator=_PooledEstimator(s["estimator"], workers)) for s in specs]
    return benchmark(None, scenes, pooled, K=K, seeds=seeds, threshold=threshold)


def cmd_selftest(args, cfg: Config) -> int:
    from .selftest import run_selftest

    results = run_selftest(quick=args.quick, seed=cfg["seed"])
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-denoiser": cmd_train_denoiser,
    "train-initializer": cmd_train_initializer,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand; choose one of " + ", ".join(COMMANDS))
        if args.command == "defaults":
            sys.stdout.write(documented_defaults())
            return EXIT_OK
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        cfg = _load_config(args)
        code = COMMANDS[args.command](args, cfg)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
