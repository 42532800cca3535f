"""Closed-form Gaussian bridge mathematics (zero base drift).

Everything here is float64 and vectorized over leading batch axes: variance
arguments may be scalars or arrays broadcastable against the points' batch
shape (a trailing singleton axis is added for the data dimension).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, DegenerateScheduleError, InvalidStatisticsError, SingularityError
from .schedule import Schedule


@dataclass(frozen=True)
class PosteriorParams:
    """Isotropic Gaussian N(mean, var * I)."""

    mean: np.ndarray
    var: np.ndarray | float


@dataclass(frozen=True)
class PreconditionCoeffs:
    c_in: np.ndarray | float
    c_skip: np.ndarray | float
    c_out: np.ndarray | float


def _col(v):
    """Scalar stays scalar; an array gains a trailing axis to broadcast over the data dimension."""
    v = np.asarray(v, dtype=np.float64)
    return v if v.ndim == 0 else v[..., None]


def _as_points(x0, x1):
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape[-1:] != x1.shape[-1:]:
        raise ValueError(f"boundary points differ in dimension: {x0.shape} vs {x1.shape}")
    return x0, x1


def posterior_params(sigma2_fwd, sigma2_bwd, x0, x1) -> PosteriorParams:
    """Bridge posterior q(X_t | X_0, X_1) given the variances accumulated from either side."""
    x0, x1 = _as_points(x0, x1)
    s2f = np.asarray(sigma2_fwd, dtype=np.float64)
    s2b = np.asarray(sigma2_bwd, dtype=np.float64)
    total = s2f + s2b
    if np.any(total <= 0):
        raise DegenerateScheduleError("sigma2_fwd + sigma2_bwd must be positive")
    w0 = s2b / total
    w1 = s2f / total
    mean = _col(w0) * x0 + _col(w1) * x1
    return PosteriorParams(mean=mean, var=s2f * s2b / total)


def gaussian_product_check(sigma2_fwd, sigma2_bwd, x0, x1) -> PosteriorParams:
    """Normalized product N(x; x0, sigma2_fwd I) * N(x; x1, sigma2_bwd I) by precision addition.

    Computed independently of :func:`posterior_params` so the two can check each other.
    A zero variance is an infinite precision and pins the product to that point.
    """
    x0, x1 = _as_points(x0, x1)
    s2f, s2b = np.broadcast_arrays(np.asarray(sigma2_fwd, dtype=np.float64), np.asarray(sigma2_bwd, dtype=np.float64))
    if np.any(s2f + s2b <= 0):
        raise DegenerateScheduleError("sigma2_fwd + sigma2_bwd must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        prec0 = 1.0 / s2f
        prec1 = 1.0 / s2b
        var = 1.0 / (prec0 + prec1)
        w0 = np.where(s2f == 0, 1.0, np.where(s2b == 0, 0.0, var * prec0))
        w1 = np.where(s2b == 0, 1.0, np.where(s2f == 0, 0.0, var * prec1))
    mean = _col(w0) * x0 + _col(w1) * x1
    return PosteriorParams(mean=mean, var=var if var.ndim else float(var))


def ddpm_posterior_params(sigma2_n, alpha2_n, x0_pred, x_next) -> PosteriorParams:
    """One-step kernel p(X_n | X_0, X_{n+1}).

    ``sigma2_n`` is the forward variance at t_n and ``alpha2_n`` the variance
    accumulated over [t_n, t_{n+1}].
    """
    x0_pred, x_next = _as_points(x0_pred, x_next)
    s2 = np.asarray(sigma2_n, dtype=np.float64)
    a2 = np.asarray(alpha2_n, dtype=np.float64)
    total = a2 + s2
    if np.any(total <= 0):
        raise DegenerateScheduleError("alpha2_n + sigma2_n must be positive")
    mean = _col(a2 / total) * x0_pred + _col(s2 / total) * x_next
    return PosteriorParams(mean=mean, var=s2 * a2 / total)


def chain_coefficients(schedule: Schedule, n: int) -> tuple[float, float, float]:
    """Marginal of X_n after composing DDPM kernels from X_N down to step n.

    Returns (a, b, v) such that X_n | X_0, X_N ~ N(a X_0 + b X_N, v I).
    The kernel weights are read off :func:`ddpm_posterior_params` with unit
    probes, so any change there shows up here.
    """
    if not 0 <= n < schedule.n_steps:
        raise BoundsError(f"step index {n} outside [0, {schedule.n_steps})")
    one, zero = np.ones(1), np.zeros(1)
    a, b, v = 0.0, 1.0, 0.0
    for k in range(schedule.n_steps - 1, n - 1, -1):
        s2 = schedule.sigma2_fwd[k]
        a2 = schedule.sigma2_fwd[k + 1] - schedule.sigma2_fwd[k]
        w0 = float(ddpm_posterior_params(s2, a2, one, zero).mean[0])
        w1 = float(ddpm_posterior_params(s2, a2, zero, one).mean[0])
        kvar = float(ddpm_posterior_params(s2, a2, zero, zero).var)
        # X_k = w0 X_0 + w1 X_{k+1} + noise, with X_{k+1} = a X_0 + b X_N + noise
        a, b, v = w0 + w1 * a, w1 * b, kvar + w1 * w1 * v
    return a, b, v


def compose_chain_oracle(schedule: Schedule, n: int, x0, xN) -> PosteriorParams:
    """Linear-Gaussian marginalization of the DDPM chain; the oracle for :func:`posterior_params`."""
    x0, xN = _as_points(x0, xN)
    a, b, v = chain_coefficients(schedule, n)
    return PosteriorParams(mean=a * x0 + b * xN, var=v)


def ot_ode_velocity(x_t, x0, beta_t, sigma2_fwd):
    """Velocity of the vanishing-diffusion limit, (beta_t / sigma_t^2) (x_t - x0)."""
    s2 = np.asarray(sigma2_fwd, dtype=np.float64)
    if np.any(s2 <= 0):
        raise SingularityError("OT-ODE velocity is singular at sigma2_fwd = 0; start integration at t > 0")
    ratio = np.asarray(beta_t, dtype=np.float64) / s2
    return _col(ratio) * (np.asarray(x_t, dtype=np.float64) - np.asarray(x0, dtype=np.float64))


def precondition_coeffs(var_xt, cov_x0_xt, var_x0) -> PreconditionCoeffs:
    """Input/skip/output scalings giving unit-variance network input and target.

    Raises:
        InvalidStatisticsError: if ``var_xt`` is not positive or the statistics
            violate Cauchy-Schwarz beyond rounding.
    """
    var_xt = np.asarray(var_xt, dtype=np.float64)
    cov = np.asarray(cov_x0_xt, dtype=np.float64)
    var_x0 = np.asarray(var_x0, dtype=np.float64)
    if np.any(var_xt <= 0) or np.any(var_x0 < 0):
        raise InvalidStatisticsError("variances must be positive")
    resid = var_x0 - cov * cov / var_xt
    if np.any(resid < -1e-12 * np.maximum(var_x0, 1.0)):
        raise InvalidStatisticsError("cov^2 > var_x0 * var_xt violates Cauchy-Schwarz")
    c_out = np.sqrt(np.maximum(resid, 0.0))
    out = PreconditionCoeffs(c_in=1.0 / np.sqrt(var_xt), c_skip=cov / var_xt, c_out=c_out)
    if out.c_in.ndim == 0:
        return PreconditionCoeffs(float(out.c_in), float(out.c_skip), float(out.c_out))
    return out
