"""Simulation-free training of the bridge score network and the conditional-SGM baseline."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bridge
from .errors import ConfigError, NonFiniteError, ShapeError
from .model import Model
from .net import Network, eps_scale, init_network, loss_and_grad
from .schedule import Schedule
from .tasks import CorruptionStats, PairedDataset, corruption_stats

log = logging.getLogger(__name__)

MODES = ("i2sb", "i2sb_ot_ode", "csgm")
PARAMETERIZATIONS = ("eps", "precond")
C_OUT_FLOOR = 1e-4


@dataclass
class TrainConfig:
    steps: int = 16000
    batch_size: int = 256
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    proposal_mix: float = 0.0
    mode: str = "i2sb"
    parameterization: str = "eps"
    log_every: int = 10
    stats_samples: int = 20000

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.log_every < 1:
            raise ConfigError("steps >= 0, batch_size >= 1 and log_every >= 1 are required")
        if not self.learning_rate > 0 or not self.adam_eps > 0:
            raise ConfigError("learning_rate and adam_eps must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not 0 <= self.proposal_mix <= 1:
            raise ConfigError(f"proposal_mix must be in [0, 1], got {self.proposal_mix}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ConfigError(f"parameterization must be one of {PARAMETERIZATIONS}, got {self.parameterization!r}")


@dataclass
class TrainingTuple:
    x0: np.ndarray
    x1: np.ndarray
    index: np.ndarray
    t: np.ndarray
    x_t: np.ndarray
    target: np.ndarray
    cond: np.ndarray | None = None


def sample_training_tuple(
    task: PairedDataset,
    schedule: Schedule,
    mode: str,
    proposal_mix: float,
    rng: np.random.Generator,
    batch_size: int = 1,
) -> TrainingTuple:
    """Draw (x0, x1, n, x_t, target) with n uniform over grid indices 1..N.

    For the bridge modes x_t comes from the bridge posterior, except that with
    probability ``proposal_mix`` it is drawn from N(x0, sigma_t^2 I) instead;
    ``i2sb_ot_ode`` uses the posterior mean with no noise. ``csgm`` draws
    x_t = x0 + sigma_t z and carries x1 as the conditioning input. The target
    is (x_t - x0) / sigma_t in every mode.
    """
    x0, x1 = task.sample(batch_size, rng)
    index = rng.integers(1, schedule.n_steps + 1, size=batch_size)
    s2f = schedule.sigma2_fwd[index]
    s2b = schedule.sigma2_bwd[index]
    z = rng.standard_normal(x0.shape)
    cond = None
    if mode == "csgm":
        x_t = x0 + np.sqrt(s2f)[:, None] * z
        cond = x1
    else:
        post = bridge.posterior_params(s2f, s2b, x0, x1)
        if mode == "i2sb_ot_ode":
            x_t = post.mean
        else:
            x_t = post.mean + np.sqrt(post.var)[:, None] * z
            forward_pick = rng.random(batch_size) < proposal_mix
            if proposal_mix > 0:
                x_fwd = x0 + np.sqrt(s2f)[:, None] * z
                x_t = np.where(forward_pick[:, None], x_fwd, x_t)
    target = (x_t - x0) / eps_scale(s2f)[:, None]
    return TrainingTuple(x0, x1, index, schedule.times[index], x_t, target, cond)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(params, grads, state: AdamState, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeError(f"params {params.shape}, grads {grads.shape} and state {state.m.shape} differ")
    b1, b2 = betas
    state.step += 1
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * (grads * grads)
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


@dataclass
class MetricsLog:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    HEADER = ("step", "loss", "grad_norm", "wallclock_ms")

    def append(self, step, loss, grad_norm, wallclock_ms):
        self.rows.append((int(step), float(loss), float(grad_norm), float(wallclock_ms)))

    @property
    def losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for step, loss, gn, ms in self.rows:
                w.writerow([step, repr(loss), repr(gn), f"{ms:.3f}"])


def _regression_batch(model: Model, tup: TrainingTuple, schedule: Schedule):
    """Network input and target for the model's parameterization."""
    if model.parameterization == "eps":
        return tup.x_t, tup.target
    coeffs = model.coefficients(schedule.sigma2_fwd[tup.index], schedule.sigma2_bwd[tup.index])
    c_in = np.asarray(coeffs.c_in)[:, None]
    c_skip = np.asarray(coeffs.c_skip)[:, None]
    c_out = np.maximum(np.asarray(coeffs.c_out), C_OUT_FLOOR)[:, None]
    return c_in * tup.x_t, (c_skip * tup.x_t - tup.x0) / c_out


def train(
    task: PairedDataset,
    schedule: Schedule,
    net: Network,
    config: TrainConfig,
    stats: CorruptionStats | None = None,
) -> tuple[Model, MetricsLog]:
    """Run ``config.steps`` Adam steps on fresh tuples; deterministic given ``config.seed``.

    ``net`` is updated in place and wrapped in the returned :class:`Model`.

    Raises:
        NonFiniteError: if the loss or gradient stops being finite.
    """
    if net.data_dim != task.dim:
        raise ShapeError(f"network dimension {net.data_dim} does not match task dimension {task.dim}")
    if (config.mode == "csgm") != (net.cond_dim == task.dim):
        raise ShapeError("csgm needs a network conditioned on x1 (cond_dim = data dim); bridge modes need cond_dim = 0")
    rng = np.random.default_rng(config.seed)
    if config.parameterization == "precond" and stats is None:
        stats = corruption_stats(task, config.stats_samples, np.random.default_rng([config.seed, 1]))
    model = Model(
        net=net,
        mode=config.mode,
        parameterization=config.parameterization,
        stats=stats if config.parameterization == "precond" else None,
        schedule=schedule,
    )
    state = AdamState.zeros_like(net.params)
    metrics = MetricsLog()
    start = time.perf_counter()
    for step in range(1, config.steps + 1):
        tup = sample_training_tuple(task, schedule, config.mode, config.proposal_mix, rng, config.batch_size)
        inp, target = _regression_batch(model, tup, schedule)
        loss, grads = loss_and_grad(net, inp, target, tup.t, tup.cond)
        gnorm = grads.norm
        if not (np.isfinite(loss) and np.isfinite(gnorm)):
            raise NonFiniteError(f"non-finite training state at step {step}: loss={loss}, grad_norm={gnorm}")
        adam_step(net.params, grads.flat, state, config.learning_rate, (config.adam_beta1, config.adam_beta2), config.adam_eps)
        if step == 1 or step % config.log_every == 0 or step == config.steps:
            metrics.append(step, loss, gnorm, 1e3 * (time.perf_counter() - start))
    model.train_steps = config.steps
    model.seed = config.seed
    log.debug("trained %s for %d steps, final loss %s", config.mode, config.steps, metrics.rows[-1][1] if metrics.rows else None)
    return model, metrics


def fit(task, schedule, config: TrainConfig, hidden=(128, 128), time_embed_dim=32, activation="silu"):
    """Initialize a network for ``config.mode`` and train it."""
    net = init_network(
        task.dim,
        hidden,
        time_embed_dim=time_embed_dim,
        cond_dim=task.dim if config.mode == "csgm" else 0,
        activation=activation,
        seed=config.seed,
    )
    return train(task, schedule, net, config)


def smoothed(values, window: int = 20) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return values.copy()
    return np.convolve(values, np.ones(window) / window, mode="valid")


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
