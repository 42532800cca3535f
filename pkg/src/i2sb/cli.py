"""Command-line entry point: ``i2sb {train,sample,verify,sweep}``.

Exit codes: 0 success, 1 runtime failure (failed verification, bad
checkpoint, sampler error), 2 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import load_config
from .errors import ConfigError, I2SBError
from .eval.experiments import (
    EVAL_SEED_OFFSET,
    run_nfe_sweep,
    run_ot_ablation,
    run_proposal_ablation,
    default_ablation_tasks,
    train_for,
)
from .eval.verify import MUTANTS, mutation, run_verification_suite
from .sample import ode_nodes, generate_csgm, generate_i2sb, integrate_ot_ode
from .schedule import subset_for_nfe
from .tasks import make_task
from .train import config_dict, fit

SAMPLE_MODES = ("i2sb", "posterior_mean", "ot_ode", "csgm")


def _out_dir(args, cfg=None) -> Path:
    out = Path(args.out if args.out else (cfg.output_dir if cfg else "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
    if args.mode is not None:
        cfg.train = replace(cfg.train, mode=args.mode)
    out = _out_dir(args, cfg)
    task = cfg.task()
    model, metrics = fit(
        task,
        cfg.schedule.build(cfg.train.mode),
        cfg.train,
        hidden=tuple(cfg.network.hidden),
        time_embed_dim=cfg.network.time_embed_dim,
        activation=cfg.network.activation,
    )
    checkpoint.save(model, out / "checkpoint.bin", task)
    metrics.write_csv(out / "metrics.csv")
    resolved = cfg.resolved()
    resolved["train"] = config_dict(cfg.train)
    resolved["output_dir"] = str(out)
    (out / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    print(f"trained {cfg.train.mode} on {task.name} for {cfg.train.steps} steps; final loss {metrics.losses[-1]:.6g}" if metrics.rows else "trained 0 steps")
    print(f"wrote {out / 'checkpoint.bin'}")
    return 0


def _read_points(path, dim: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return np.zeros((0, dim))
    return data[:, -dim:]


def cmd_sample(args) -> int:
    model, desc = checkpoint.load(args.checkpoint)
    mode = args.mode or ("csgm" if model.mode == "csgm" else "i2sb")
    if mode not in SAMPLE_MODES:
        raise ConfigError(f"--mode must be one of {SAMPLE_MODES}, got {mode!r}")
    if (mode == "csgm") != (model.mode == "csgm"):
        raise ConfigError(f"mode {mode!r} cannot be used with a checkpoint trained as {model.mode!r}")
    if model.schedule is None:
        raise ConfigError("checkpoint has no schedule descriptor")
    dim = model.net.data_dim
    seed = 0 if args.seed is None else args.seed
    if args.input:
        x1 = _read_points(args.input, dim)
    elif desc.get("task"):
        task = make_task(desc["task"]["kind"], desc["task"]["params"])
        _, x1 = task.pairs(EVAL_SEED_OFFSET + seed, args.count)
    else:
        raise ConfigError("checkpoint records no task; pass --input with degraded points")
    nfe = args.nfe or model.schedule.n_steps
    sched = subset_for_nfe(model.schedule, nfe)
    out = _out_dir(args)

    if mode == "ot_ode":
        ode_nodes(sched, args.t_start)  # reject a singular start even when there is nothing to sample
    start = time.perf_counter()
    capture = "all" if args.trajectory else 1
    if len(x1) == 0:
        traj = None
        final = np.zeros((0, dim))
    elif mode == "ot_ode":
        traj = integrate_ot_ode(model, x1, sched, t_start=args.t_start, capture=capture)
    elif mode == "csgm":
        traj = generate_csgm(model, x1, sched, seed=seed, capture=capture)
    else:
        traj = generate_i2sb(model, x1, sched, stochastic=mode == "i2sb", seed=seed, capture=capture)
    elapsed = 1e3 * (time.perf_counter() - start)
    if traj is not None:
        final = traj.final

    with open(out / "samples.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", *(f"x_{i}" for i in range(dim))])
        for i, row in enumerate(final):
            w.writerow([i, *(repr(float(v)) for v in row)])
    if args.trajectory and traj is not None:
        traj.write_csv(out / "trajectory.csv")
    meta = {"mode": mode, "nfe": int(nfe), "seed": seed, "count": int(len(final)), "wallclock_ms": round(elapsed, 3)}
    (out / "samples_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps(meta))
    return 0


def cmd_verify(args) -> int:
    if args.mutate:
        with mutation(args.mutate):
            report = run_verification_suite()
    else:
        report = run_verification_suite()
    print(report.table())
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    return 0 if report.passed else 1


def _train_job(job):
    # tasks hold closures, so workers rebuild them from (kind, params)
    (kind, params), mode, seed, budget, mix = job
    return train_for(make_task(kind, params), mode, seed, budget, proposal_mix=mix)


def _train_all(jobs, workers: int):
    if workers <= 1:
        return [_train_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_train_job, jobs))


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    budget = cfg.budget()
    out = _out_dir(args, cfg)
    spec = cfg.sweep
    if spec.experiment == "nfe":
        nfe_list = [int(n) for n in (args.nfe or cfg.sample.nfe)]
        modes = [args.mode] if args.mode else spec.modes
        task_names = spec.tasks or [cfg.task_kind]
        for name in task_names:
            task = cfg.task() if name == cfg.task_kind else make_task(name)
            keys = [(mode, seed) for mode in modes for seed in seeds]
            models = _train_all([((name, task.params), m, s, budget, 0.0) for m, s in keys], spec.workers)
            report = run_nfe_sweep(dict(zip(keys, models)), task, nfe_list, seeds, budget)
            report.write_csv(out / f"sweep_{name}.csv")
            report.write_timings(out / f"timings_{name}.csv")
            print(report.summary())
    elif spec.experiment == "ot_ablation":
        tasks = default_ablation_tasks()
        report = run_ot_ablation(tasks, seeds, replace(budget, eval_nfe=int(args.nfe[0]) if args.nfe else budget.eval_nfe))
        report.write_csv(out / "ot_ablation.csv")
        print(report.summary())
    else:
        result = run_proposal_ablation(cfg.task(), spec.proposal_mix, seeds, budget)
        with open(out / "proposal_ablation.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "proposal_mix", "seed", "sliced_w2"])
            for mix, vals in result.items():
                for seed, v in zip(seeds, vals):
                    w.writerow([cfg.task_kind, repr(mix), seed, repr(v)])
        for mix, vals in result.items():
            print(f"proposal_mix={mix:<4} sliced_w2 mean={np.mean(vals):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="i2sb", description="Toy-scale image-to-image Schrodinger bridge.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a TOML config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--mode", choices=("i2sb", "i2sb_ot_ode", "csgm"))
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="generate from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--nfe", type=int)
    s.add_argument("--mode", choices=SAMPLE_MODES)
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--seed", type=int)
    s.add_argument("--input", help="CSV of degraded points (header row; last d columns are used)")
    s.add_argument("--t-start", type=float, dest="t_start", help="OT-ODE start time (default: first positive grid time)")
    s.add_argument("--trajectory", action="store_true", help="also write every intermediate state")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    v = sub.add_parser("verify", help="run the exact-math verification suite")
    v.add_argument("--mutate", choices=sorted(MUTANTS), help="inject one coefficient mutation first")
    v.add_argument("--json", help="also write the machine-readable report here")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="run a trend experiment from a TOML config")
    w.add_argument("--config", required=True)
    w.add_argument("--seed", type=int)
    w.add_argument("--nfe", type=int, nargs="+")
    w.add_argument("--mode", choices=("i2sb", "csgm", "i2sb_ot_ode"))
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "count", 0) < 0:
        print("error: --count must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except I2SBError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
