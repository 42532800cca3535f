"""Toy-scale trend experiments: NFE sweep, OT-ODE ablation and sampling-proposal ablation.

Evaluation pairs come from seeds offset by ``EVAL_SEED_OFFSET`` so they never
overlap a training stream.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import NonFiniteError
from ..model import Model
from ..sample import generate_csgm, generate_i2sb
from ..schedule import Schedule, build_schedule, subset_for_nfe
from ..tasks import PairedDataset, make_task
from ..train import TrainConfig, fit
from .metrics import energy_distance, sliced_wasserstein

EVAL_SEED_OFFSET = 1_000_003
SWEEP_MODES = ("i2sb", "csgm", "i2sb_ot_ode")


@dataclass
class Budget:
    """Everything that must be identical across the models being compared."""

    steps: int = 16000
    batch_size: int = 256
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = (128, 128)
    time_embed_dim: int = 32
    n_steps: int = 1000
    beta_profile: str = "symmetric"
    spacing: str = "quadratic"
    sigma2_total: float = 0.25
    csgm_sigma2_total: float = 16.0
    parameterization: str = "eps"
    n_eval: int = 2000
    n_projections: int = 128
    eval_nfe: int = 100

    def schedule(self, mode: str) -> Schedule:
        total = self.csgm_sigma2_total if mode == "csgm" else self.sigma2_total
        return build_schedule(self.n_steps, self.beta_profile, total, self.spacing)


def train_for(task: PairedDataset, mode: str, seed: int, budget: Budget, proposal_mix: float = 0.0) -> Model:
    config = TrainConfig(
        steps=budget.steps,
        batch_size=budget.batch_size,
        learning_rate=budget.learning_rate,
        seed=seed,
        mode=mode,
        proposal_mix=proposal_mix,
        parameterization=budget.parameterization,
        log_every=max(budget.steps // 100, 1),
    )
    model, _ = fit(task, budget.schedule(mode), config, hidden=budget.hidden, time_embed_dim=budget.time_embed_dim)
    return model


def _eval_sets(task: PairedDataset, seed: int, n: int):
    """Held-out degraded inputs and the reference set they are scored against.

    The reference is the clean half of the same held-out pairs. It is still an
    i.i.d. sample of the clean distribution, but sharing the draw with the
    inputs removes the mode-occupancy noise that otherwise dominates sliced W2
    at a few thousand points (common random numbers).
    """
    reference, x1 = task.pairs(EVAL_SEED_OFFSET + seed, n)
    return x1, reference


def generate(model: Model, x1, schedule: Schedule, seed: int, stochastic: bool = True) -> np.ndarray:
    if model.mode == "csgm":
        return generate_csgm(model, x1, schedule, seed=seed, capture=1).final
    return generate_i2sb(model, x1, schedule, stochastic=stochastic, seed=seed, capture=1).final


def score(samples, reference, n_projections: int, seed: int) -> dict:
    return {
        "sliced_w2": sliced_wasserstein(samples, reference, n_projections, rng=[EVAL_SEED_OFFSET, seed, 2]),
        "energy": energy_distance(samples, reference),
    }


@dataclass
class SweepReport:
    """One row per (mode, nfe, seed); wallclock is kept apart so metric CSVs stay reproducible."""

    task: str
    rows: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)

    def value(self, mode: str, nfe: int, seed: int, metric: str = "sliced_w2") -> float:
        for r in self.rows:
            if (r["mode"], r["nfe"], r["seed"]) == (mode, nfe, seed):
                return r[metric]
        raise KeyError((mode, nfe, seed))

    @property
    def seeds(self) -> list[int]:
        return sorted({r["seed"] for r in self.rows})

    @property
    def modes(self) -> list[str]:
        return sorted({r["mode"] for r in self.rows})

    def nfes(self, mode: str) -> list[int]:
        return sorted({r["nfe"] for r in self.rows if r["mode"] == mode})

    def mean(self, mode: str, nfe: int, metric: str = "sliced_w2") -> float:
        return float(np.mean([self.value(mode, nfe, s, metric) for s in self.seeds]))

    def degradation_ratio(self, mode: str, low_nfe: int, high_nfe: int, metric: str = "sliced_w2") -> float:
        """Seed-mean of metric(low_nfe) / metric(high_nfe)."""
        return float(np.mean([self.value(mode, low_nfe, s, metric) / self.value(mode, high_nfe, s, metric) for s in self.seeds]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "mode", "nfe", "seed", "sliced_w2", "energy"])
            for r in sorted(self.rows, key=lambda r: (r["mode"], r["nfe"], r["seed"])):
                w.writerow([self.task, r["mode"], r["nfe"], r["seed"], repr(r["sliced_w2"]), repr(r["energy"])])

    def write_timings(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "mode", "nfe", "seed", "wallclock_ms"])
            for r in self.timings:
                w.writerow([self.task, r["mode"], r["nfe"], r["seed"], f"{r['wallclock_ms']:.3f}"])

    def summary(self, metric: str = "sliced_w2") -> str:
        lines = [f"task={self.task} metric={metric} (mean over seeds {self.seeds})"]
        for mode in self.modes:
            cells = "  ".join(f"nfe={n}:{self.mean(mode, n, metric):.4f}" for n in self.nfes(mode))
            lines.append(f"  {mode:<12} {cells}")
        return "\n".join(lines)


def run_nfe_sweep(models: dict, task: PairedDataset, nfe_list, seeds, budget: Budget) -> SweepReport:
    """Score each model at each NFE.

    Args:
        models: ``{(mode, seed): Model}``; each model carries the fine schedule it was trained on.
        nfe_list: numbers of sampling steps to evaluate.
        seeds: seeds to evaluate; each seed also selects its evaluation pairs.
    """
    report = SweepReport(task.name)
    for seed in seeds:
        x1, reference = _eval_sets(task, seed, budget.n_eval)
        for (mode, model_seed), model in sorted(models.items()):
            if model_seed != seed:
                continue
            for nfe in nfe_list:
                sched = subset_for_nfe(model.schedule, nfe)
                start = time.perf_counter()
                out = generate(model, x1, sched, seed, stochastic=mode != "i2sb_ot_ode")
                elapsed = 1e3 * (time.perf_counter() - start)
                report.rows.append({"mode": mode, "nfe": nfe, "seed": seed, **score(out, reference, budget.n_projections, seed)})
                report.timings.append({"mode": mode, "nfe": nfe, "seed": seed, "wallclock_ms": elapsed})
    return report


def nfe_sweep(task: PairedDataset, nfe_list, seeds, budget: Budget, modes=("i2sb", "csgm"), trainer=train_for) -> SweepReport:
    """Train one model per (mode, seed) under ``budget`` and sweep it.

    ``trainer`` has the signature of :func:`train_for`; pass a caching wrapper
    to share models between experiments.
    """
    models = {(mode, seed): trainer(task, mode, seed, budget) for mode in modes for seed in seeds}
    return run_nfe_sweep(models, task, nfe_list, seeds, budget)


@dataclass
class AblationReport:
    """Per-task metric of the stochastic and posterior-mean variants; delta = posterior-mean minus stochastic."""

    rows: list[dict] = field(default_factory=list)

    def tasks(self) -> list[str]:
        return list(dict.fromkeys(r["task"] for r in self.rows))

    def mean(self, task: str, variant: str, metric: str = "sliced_w2") -> float:
        return float(np.mean([r[metric] for r in self.rows if r["task"] == task and r["variant"] == variant]))

    def delta(self, task: str, metric: str = "sliced_w2") -> float:
        return self.mean(task, "posterior_mean", metric) - self.mean(task, "stochastic", metric)

    def relative_delta(self, task: str, metric: str = "sliced_w2") -> float:
        return self.delta(task, metric) / self.mean(task, "stochastic", metric)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "variant", "seed", "sliced_w2", "energy"])
            for r in self.rows:
                w.writerow([r["task"], r["variant"], r["seed"], repr(r["sliced_w2"]), repr(r["energy"])])

    def summary(self) -> str:
        lines = ["task                 stochastic  posterior_mean  delta     rel"]
        for t in self.tasks():
            lines.append(
                f"{t:<20} {self.mean(t, 'stochastic'):.4f}      {self.mean(t, 'posterior_mean'):.4f}          "
                f"{self.delta(t):+.4f}   {self.relative_delta(t):+.1%}"
            )
        return "\n".join(lines)


def run_ot_ablation(tasks: dict[str, PairedDataset], seeds, budget: Budget, trainer=train_for) -> AblationReport:
    """Stochastic bridge vs. the posterior-mean (OT-ODE) variant, trained and sampled with identical budgets."""
    report = AblationReport()
    for name, task in tasks.items():
        for seed in seeds:
            x1, reference = _eval_sets(task, seed, budget.n_eval)
            for variant, mode in (("stochastic", "i2sb"), ("posterior_mean", "i2sb_ot_ode")):
                model = trainer(task, mode, seed, budget)
                sched = subset_for_nfe(model.schedule, budget.eval_nfe)
                try:
                    out = generate(model, x1, sched, seed, stochastic=variant == "stochastic")
                    metrics = score(out, reference, budget.n_projections, seed)
                except NonFiniteError:
                    # a chain that overflows is the limiting case of degradation, not a crash
                    metrics = {"sliced_w2": float("inf"), "energy": float("inf")}
                report.rows.append({"task": name, "variant": variant, "seed": seed, **metrics})
    return report


def run_proposal_ablation(task: PairedDataset, mixes, seeds, budget: Budget, trainer=train_for) -> dict[float, list[float]]:
    """Sliced-W2 per seed for bridge models trained with each proposal mixing ratio."""
    out: dict[float, list[float]] = {}
    for mix in mixes:
        vals = []
        for seed in seeds:
            x1, reference = _eval_sets(task, seed, budget.n_eval)
            model = trainer(task, "i2sb", seed, budget, proposal_mix=mix)
            sched = subset_for_nfe(model.schedule, budget.eval_nfe)
            vals.append(score(generate(model, x1, sched, seed), reference, budget.n_projections, seed)["sliced_w2"])
        out[float(mix)] = vals
    return out


def default_ablation_tasks(side: int = 8) -> dict[str, PairedDataset]:
    return {
        "img_blur": make_task("img_blur", {"side": side}),
        "img_mask": make_task("img_mask", {"side": side, "noise_fill": False}),
        "img_mask_noise": make_task("img_mask", {"side": side, "noise_fill": True}),
    }


def with_overrides(budget: Budget, **kw) -> Budget:
    return replace(budget, **kw)
