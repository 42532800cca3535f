"""TOML run configuration.

Sections and keys (required ones marked)::

    seeds = [0]                       # optional; train uses the first

    [task]
    kind = "gauss_shift"              # required
    params = { noise_std = 0.25 }

    [schedule]
    n_steps = 1000
    beta_profile = "symmetric"
    sigma2_total = 0.25
    csgm_sigma2_total = 16.0
    spacing = "quadratic"

    [network]
    hidden = [128, 128]
    time_embed_dim = 32
    activation = "silu"

    [train]
    steps = 16000                     # required
    mode = "i2sb"                     # required
    # any other TrainConfig field

    [sample]
    nfe = [1, 2, 10, 100, 1000]
    stochastic = true
    count = 1000

    [sweep]
    experiment = "nfe"                # nfe | ot_ablation | proposal
    tasks = ["gauss_shift"]           # defaults to [task]
    modes = ["i2sb", "csgm"]
    proposal_mix = [0.0, 0.5, 1.0]
    n_eval = 2000
    n_projections = 128
    workers = 1

    output_dir = "runs/example"
"""

from __future__ import annotations

import re
import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .eval.experiments import Budget
from .schedule import build_schedule
from .tasks import TASK_KINDS, make_task
from .train import TrainConfig

REQUIRED = ("task.kind", "train.steps", "train.mode")
EXPERIMENTS = ("nfe", "ot_ablation", "proposal")


@dataclass
class ScheduleSpec:
    n_steps: int = 1000
    beta_profile: str = "symmetric"
    sigma2_total: float = 0.25
    csgm_sigma2_total: float = 16.0
    spacing: str = "quadratic"

    def build(self, mode: str = "i2sb"):
        total = self.csgm_sigma2_total if mode == "csgm" else self.sigma2_total
        return build_schedule(self.n_steps, self.beta_profile, total, self.spacing)


@dataclass
class NetworkSpec:
    hidden: list[int] = field(default_factory=lambda: [128, 128])
    time_embed_dim: int = 32
    activation: str = "silu"


@dataclass
class SampleSpec:
    nfe: list[int] = field(default_factory=lambda: [1, 2, 10, 100, 1000])
    stochastic: bool = True
    count: int = 1000


@dataclass
class SweepSpec:
    experiment: str = "nfe"
    tasks: list[str] = field(default_factory=list)
    modes: list[str] = field(default_factory=lambda: ["i2sb", "csgm"])
    proposal_mix: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])
    n_eval: int = 2000
    n_projections: int = 128
    workers: int = 1


@dataclass
class RunConfig:
    task_kind: str
    task_params: dict
    train: TrainConfig
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    sample: SampleSpec = field(default_factory=SampleSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str = "."

    def task(self):
        return make_task(self.task_kind, self.task_params)

    def budget(self) -> Budget:
        return Budget(
            steps=self.train.steps,
            batch_size=self.train.batch_size,
            learning_rate=self.train.learning_rate,
            hidden=tuple(self.network.hidden),
            time_embed_dim=self.network.time_embed_dim,
            n_steps=self.schedule.n_steps,
            beta_profile=self.schedule.beta_profile,
            spacing=self.schedule.spacing,
            sigma2_total=self.schedule.sigma2_total,
            csgm_sigma2_total=self.schedule.csgm_sigma2_total,
            parameterization=self.train.parameterization,
            n_eval=self.sweep.n_eval,
            n_projections=self.sweep.n_projections,
            eval_nfe=max(self.sample.nfe),
        )

    def resolved(self) -> dict:
        """Every value after defaults are applied; the canonical record of a run."""
        return {
            "task": {"kind": self.task_kind, "params": self.task().params},
            "schedule": asdict(self.schedule),
            "network": asdict(self.network),
            "train": asdict(self.train),
            "sample": asdict(self.sample),
            "sweep": asdict(self.sweep),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
        }


def _line_of(text: str, section: str | None, key: str) -> int | None:
    """1-based line where ``key`` is assigned inside ``[section]``, if it can be found."""
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            continue
        if current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    return None


def _where(text, section, key) -> str:
    line = _line_of(text, section, key)
    return f" (line {line})" if line else ""


def _fill(cls, table: dict, section: str, text: str):
    known = {f.name for f in fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key '{section}.{key}'{_where(text, section, key)}")
    try:
        return cls(**table)
    except ConfigError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    for dotted in REQUIRED:
        section, key = dotted.split(".")
        if key not in raw.get(section, {}):
            raise ConfigError(f"missing required field '{dotted}'")
    top_known = {"task", "schedule", "network", "train", "sample", "sweep", "seeds", "output_dir"}
    for key in raw:
        if key not in top_known:
            raise ConfigError(f"unknown top-level key '{key}'{_where(text, None, key)}")

    task = dict(raw["task"])
    kind = task.pop("kind")
    params = task.pop("params", {})
    if task:
        key = next(iter(task))
        raise ConfigError(f"unknown key 'task.{key}'{_where(text, 'task', key)}")
    if kind not in TASK_KINDS:
        raise ConfigError(f"task.kind must be one of {TASK_KINDS}, got {kind!r}{_where(text, 'task', 'kind')}")
    cfg = RunConfig(
        task_kind=kind,
        task_params=params,
        train=_fill(TrainConfig, raw["train"], "train", text),
        schedule=_fill(ScheduleSpec, raw.get("schedule", {}), "schedule", text),
        network=_fill(NetworkSpec, raw.get("network", {}), "network", text),
        sample=_fill(SampleSpec, raw.get("sample", {}), "sample", text),
        sweep=_fill(SweepSpec, raw.get("sweep", {}), "sweep", text),
        seeds=[int(s) for s in raw.get("seeds", [raw["train"].get("seed", 0)])],
        output_dir=str(raw.get("output_dir", ".")),
    )
    # surface bad enums and parameters now rather than mid-run
    cfg.task()
    cfg.schedule.build(cfg.train.mode)
    if cfg.sweep.experiment not in EXPERIMENTS:
        raise ConfigError(f"sweep.experiment must be one of {EXPERIMENTS}, got {cfg.sweep.experiment!r}")
    if cfg.sweep.workers < 1:
        raise ConfigError("sweep.workers must be at least 1")
    if not cfg.sample.nfe or any(int(n) < 1 for n in cfg.sample.nfe):
        raise ConfigError("sample.nfe must be a non-empty list of positive integers")
    if not cfg.seeds:
        raise ConfigError("seeds must not be empty")
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)
