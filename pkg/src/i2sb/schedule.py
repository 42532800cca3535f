"""Noise schedules for the bridge: per-interval diffusion rates and accumulated variances.

Only two rate profiles are supported, both with closed-form integrals, so every
accumulated variance is an exact function of time:

* ``constant``: beta(t) = sigma2_total
* ``symmetric``: triangular beta(t), zero at both boundaries and peaking at t = 0.5
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigError

BETA_PROFILES = ("constant", "symmetric")
SPACINGS = ("uniform", "quadratic")


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def beta_rate(t, beta_profile: str, sigma2_total: float):
    """Instantaneous diffusion rate beta(t)."""
    t = np.asarray(t, dtype=np.float64)
    if beta_profile == "constant":
        return np.full_like(t, sigma2_total)
    peak = 4.0 * sigma2_total
    return peak * np.minimum(t, 1.0 - t)


def cumulative_variance(t, beta_profile: str, sigma2_total: float):
    """Integral of beta over [0, t]."""
    t = np.asarray(t, dtype=np.float64)
    if beta_profile == "constant":
        return sigma2_total * t
    peak = 4.0 * sigma2_total
    # triangular area: rising half below 0.5, total minus the falling tail above
    return np.where(t <= 0.5, 0.5 * peak * t * t, sigma2_total - 0.5 * peak * (1.0 - t) ** 2)


@dataclass(frozen=True)
class Schedule:
    """Discrete time grid with exact accumulated variances.

    ``indices`` maps each grid point back to the fine schedule it was taken
    from (identity for a freshly built schedule), and ``t_min`` is the first
    positive time of that fine grid.
    """

    n_steps: int
    times: np.ndarray
    betas: np.ndarray
    sigma2_fwd: np.ndarray
    sigma2_bwd: np.ndarray
    beta_profile: str
    sigma2_total: float
    spacing: str
    t_min: float
    indices: np.ndarray = field(repr=False)

    def beta_at(self, t):
        return beta_rate(t, self.beta_profile, self.sigma2_total)

    def sigma2_at(self, t):
        """Forward accumulated variance at an arbitrary time in [0, 1]."""
        return cumulative_variance(t, self.beta_profile, self.sigma2_total)

    def descriptor(self) -> dict:
        return {
            "n_steps": int(self.indices[-1]),
            "beta_profile": self.beta_profile,
            "sigma2_total": float(self.sigma2_total),
            "spacing": self.spacing,
        }

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return (
            self.n_steps == other.n_steps
            and self.beta_profile == other.beta_profile
            and self.sigma2_total == other.sigma2_total
            and self.spacing == other.spacing
            and self.t_min == other.t_min
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("times", "betas", "sigma2_fwd", "sigma2_bwd", "indices")
            )
        )

    __hash__ = None


def _from_grid(times, sigma2_fwd, *, beta_profile, sigma2_total, spacing, t_min, indices) -> Schedule:
    times = np.asarray(times, dtype=np.float64)
    sigma2_fwd = np.asarray(sigma2_fwd, dtype=np.float64)
    total = sigma2_fwd[-1]
    sigma2_bwd = total - sigma2_fwd
    sigma2_bwd[-1] = 0.0
    betas = np.diff(sigma2_fwd) / np.diff(times)
    return Schedule(
        n_steps=len(times) - 1,
        times=_readonly(times),
        betas=_readonly(betas),
        sigma2_fwd=_readonly(sigma2_fwd),
        sigma2_bwd=_readonly(sigma2_bwd),
        beta_profile=beta_profile,
        sigma2_total=float(sigma2_total),
        spacing=spacing,
        t_min=float(t_min),
        indices=np.asarray(indices, dtype=np.int64),
    )


def build_schedule(
    n_steps: int,
    beta_profile: str = "symmetric",
    sigma2_total: float = 1.0,
    spacing: str = "quadratic",
) -> Schedule:
    """Build a schedule with ``n_steps`` intervals on [0, 1].

    Args:
        n_steps: number of intervals N; the grid has N + 1 points.
        beta_profile: ``"constant"`` or ``"symmetric"``.
        sigma2_total: integral of beta over [0, 1].
        spacing: ``"uniform"`` (t_n = n/N) or ``"quadratic"`` (t_n = (n/N)^2).

    Raises:
        ConfigError: on a non-positive step count or total variance, or an
            unknown profile/spacing name.
    """
    if isinstance(n_steps, bool) or not isinstance(n_steps, (int, np.integer)) or n_steps < 1:
        raise ConfigError(f"n_steps must be a positive integer, got {n_steps!r}")
    if not np.isfinite(sigma2_total) or sigma2_total <= 0:
        raise ConfigError(f"sigma2_total must be positive, got {sigma2_total!r}")
    if beta_profile not in BETA_PROFILES:
        raise ConfigError(f"beta_profile must be one of {BETA_PROFILES}, got {beta_profile!r}")
    if spacing not in SPACINGS:
        raise ConfigError(f"spacing must be one of {SPACINGS}, got {spacing!r}")

    n_steps = int(n_steps)
    grid = np.arange(n_steps + 1, dtype=np.float64) / n_steps
    times = grid if spacing == "uniform" else grid * grid
    sigma2_fwd = cumulative_variance(times, beta_profile, sigma2_total)
    sigma2_fwd[0] = 0.0
    sigma2_fwd[-1] = sigma2_total
    return _from_grid(
        times,
        sigma2_fwd,
        beta_profile=beta_profile,
        sigma2_total=sigma2_total,
        spacing=spacing,
        t_min=times[1],
        indices=np.arange(n_steps + 1),
    )


def variances_at(schedule: Schedule, n: int) -> tuple[float, float, float]:
    """Return (sigma2_fwd[n], sigma2_bwd[n], alpha2[n]).

    ``alpha2`` is the variance accumulated over [t_n, t_{n+1}] and is NaN at
    the last grid point, where it is undefined.
    """
    if not 0 <= n <= schedule.n_steps:
        raise BoundsError(f"step index {n} outside [0, {schedule.n_steps}]")
    s2f = float(schedule.sigma2_fwd[n])
    s2b = float(schedule.sigma2_bwd[n])
    if n == schedule.n_steps:
        return s2f, s2b, float("nan")
    return s2f, s2b, float(schedule.sigma2_fwd[n + 1] - schedule.sigma2_fwd[n])


def subset_for_nfe(schedule: Schedule, nfe: int) -> Schedule:
    """Coarsen ``schedule`` to ``nfe`` intervals.

    The retained grid points are the fine indices nearest to an evenly spaced
    index grid, so t=0 and t=1 are always kept. Variances are read from the
    fine schedule, never recomputed.
    """
    if isinstance(nfe, bool) or not isinstance(nfe, (int, np.integer)) or not 1 <= nfe <= schedule.n_steps:
        raise ConfigError(f"nfe must be in [1, {schedule.n_steps}], got {nfe!r}")
    if nfe == schedule.n_steps:
        return schedule
    picks = np.rint(np.linspace(0.0, schedule.n_steps, int(nfe) + 1)).astype(np.int64)
    return _from_grid(
        schedule.times[picks],
        schedule.sigma2_fwd[picks],
        beta_profile=schedule.beta_profile,
        sigma2_total=schedule.sigma2_total,
        spacing=schedule.spacing,
        t_min=schedule.t_min,
        indices=schedule.indices[picks],
    )
