"""Generation: recursive posterior sampling from x1, the OT-ODE integrator, and the CSGM baseline.

Every batch element draws its noise from its own generator, seeded by
(seed, element index), and the network evaluates rows independently;
splitting a batch across workers therefore reproduces a serial run bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import bridge
from .errors import NonFiniteError, ShapeError, SingularityError
from .model import as_predictor
from .schedule import Schedule

MAX_SNAPSHOTS = 32


@dataclass
class Trajectory:
    """States at retained times, ordered from t = 1 toward t = 0."""

    times: list[float]
    states: list[np.ndarray]
    final: np.ndarray
    metadata: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        """Rows of (sample_index, time, x_0..x_{d-1})."""
        d = self.final.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_index", "time", *(f"x_{i}" for i in range(d))])
            for t, state in zip(self.times, self.states):
                for i, row in enumerate(state):
                    w.writerow([i, repr(float(t)), *(repr(float(v)) for v in row)])

    def save_npz(self, path) -> None:
        np.savez(path, times=np.asarray(self.times), states=np.stack(self.states), final=self.final)


class NoiseStreams:
    """Per-element standard normal streams, drawn in blocks of ``block`` steps."""

    def __init__(self, seed: int, count: int, dim: int, block: int = 64, offset: int = 0):
        self.dim = dim
        self.block = block
        self._gens = [np.random.default_rng([int(seed), offset + i]) for i in range(count)]
        self._buf = np.empty((count, 0, dim))
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self._buf.shape[1]:
            self._buf = np.stack([g.standard_normal((self.block, self.dim)) for g in self._gens]) if self._gens else np.empty((0, self.block, self.dim))
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out


def _snapshot_positions(n_states: int, capture: str | int) -> set[int]:
    if capture == "all":
        return set(range(n_states))
    k = MAX_SNAPSHOTS if capture == "default" else int(capture)
    return set(np.rint(np.linspace(0, n_states - 1, min(k, n_states))).astype(int).tolist())


def _check_finite(x, step, t):
    if not np.all(np.isfinite(x)):
        bad = int(np.sum(~np.isfinite(x).all(axis=1)))
        raise NonFiniteError(f"non-finite sampler state at step {step} (t={t:.6g}): {bad} rows affected")


def _posterior_chain(model, x_start, schedule, stochastic, seed, capture, cond, streams):
    x = np.array(x_start, dtype=np.float64)
    n_steps = schedule.n_steps
    keep = _snapshot_positions(n_steps + 1, capture)
    times, states = [], []
    if 0 in keep:
        times.append(float(schedule.times[n_steps]))
        states.append(x.copy())
    for pos, n in enumerate(range(n_steps, 0, -1), start=1):
        t_n = schedule.times[n]
        x0_pred = model.predict_x0(x, t_n, schedule.sigma2_fwd[n], schedule.sigma2_bwd[n], cond)
        s2_prev = schedule.sigma2_fwd[n - 1]
        post = bridge.ddpm_posterior_params(s2_prev, schedule.sigma2_fwd[n] - s2_prev, x0_pred, x)
        x = post.mean
        if stochastic and post.var > 0:
            x = x + np.sqrt(post.var) * streams.next()
        _check_finite(x, n, t_n)
        if pos in keep:
            times.append(float(schedule.times[n - 1]))
            states.append(x.copy())
    return Trajectory(times, states, x)


def generate_i2sb(
    model, x1, schedule: Schedule, stochastic: bool = True, seed: int = 0, capture="default", index_offset: int = 0
) -> Trajectory:
    """Start at x_N = x1 and step down the grid with x_{n-1} ~ p(x_{n-1} | x0_pred, x_n).

    With ``stochastic=False`` each step keeps the kernel mean (the posterior-mean
    sampler). ``capture`` is ``"default"`` (at most 32 snapshots), ``"all"``, or
    a snapshot count. Row i draws its noise from stream ``index_offset + i``, so
    a batch split into shards with matching offsets reproduces the whole batch.
    """
    model = as_predictor(model)
    x1 = np.asarray(x1, dtype=np.float64)
    if x1.ndim != 2:
        raise ShapeError(f"x1 must be a (batch, dim) array, got shape {x1.shape}")
    streams = NoiseStreams(seed, len(x1), x1.shape[1], offset=index_offset)
    traj = _posterior_chain(model, x1, schedule, stochastic, seed, capture, None, streams)
    traj.metadata = {"mode": "i2sb" if stochastic else "posterior_mean", "nfe": schedule.n_steps, "seed": seed}
    return traj


def generate_csgm(model, x1, schedule: Schedule, seed: int = 0, capture="default", index_offset: int = 0) -> Trajectory:
    """Same recursion started from x_N ~ N(0, sigma2_total I), with x1 passed as the condition."""
    model = as_predictor(model)
    x1 = np.asarray(x1, dtype=np.float64)
    if x1.ndim != 2:
        raise ShapeError(f"x1 must be a (batch, dim) array, got shape {x1.shape}")
    streams = NoiseStreams(seed, len(x1), x1.shape[1], offset=index_offset)
    x_start = np.sqrt(schedule.sigma2_fwd[-1]) * streams.next()
    traj = _posterior_chain(model, x_start, schedule, True, seed, capture, x1, streams)
    traj.metadata = {"mode": "csgm", "nfe": schedule.n_steps, "seed": seed}
    return traj


def ode_nodes(schedule: Schedule, t_start: float | None) -> np.ndarray:
    t_start = schedule.t_min if t_start is None else float(t_start)
    if t_start <= 0 or schedule.sigma2_at(t_start) <= 0:
        raise SingularityError(
            f"OT-ODE cannot start at t={t_start}: sigma_t^2 = 0 there. "
            f"Use t_start > 0, e.g. the first positive grid time {schedule.t_min:.3g}."
        )
    nodes = schedule.times[schedule.times >= t_start][::-1]
    if nodes[-1] > t_start:
        nodes = np.append(nodes, t_start)
    return nodes


def integrate_ot_ode(model, x1, schedule: Schedule, method: str = "rk4", t_start: float | None = None, capture="default") -> Trajectory:
    """Integrate dx/dt = (beta_t / sigma_t^2)(x - x0_pred(x, t)) from t = 1 down to ``t_start``.

    The nodes are the schedule's grid times at or above ``t_start`` (default:
    the first positive time of the fine grid). The trajectory ends with one
    extra state at t = 0 holding the x0 prediction at ``t_start``.
    """
    if method not in ("euler", "rk4"):
        raise ValueError(f"method must be 'euler' or 'rk4', got {method!r}")
    model = as_predictor(model)
    cond = np.asarray(x1, dtype=np.float64) if model.conditional else None
    nodes = ode_nodes(schedule, t_start)
    total = schedule.sigma2_total

    def velocity(x, t):
        s2f = float(schedule.sigma2_at(t))
        x0_pred = model.predict_x0(x, t, s2f, total - s2f, cond)
        return bridge.ot_ode_velocity(x, x0_pred, float(schedule.beta_at(t)), s2f)

    x = np.array(x1, dtype=np.float64)
    keep = _snapshot_positions(len(nodes) + 1, capture)
    times, states = ([float(nodes[0])], [x.copy()]) if 0 in keep else ([], [])
    for k in range(1, len(nodes)):
        t, h = nodes[k - 1], nodes[k] - nodes[k - 1]
        if method == "euler":
            x = x + h * velocity(x, t)
        else:
            k1 = velocity(x, t)
            k2 = velocity(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = velocity(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = velocity(x + h * k3, t + h)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_finite(x, k, nodes[k])
        if k in keep:
            times.append(float(nodes[k]))
            states.append(x.copy())
    t_end = float(nodes[-1])
    s2f = float(schedule.sigma2_at(t_end))
    final = model.predict_x0(x, t_end, s2f, total - s2f, cond)
    if len(nodes) in keep:
        times.append(0.0)
        states.append(final.copy())
    return Trajectory(times, states, final, {"mode": "ot_ode", "method": method, "t_start": t_end, "nfe": len(nodes) - 1})
