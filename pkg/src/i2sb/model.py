"""X0-predictors consumed by the samplers.

A predictor exposes ``predict_x0(x, t, sigma2_fwd, sigma2_bwd, cond=None)`` and
a ``conditional`` flag telling the sampler whether to pass x1 as ``cond``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bridge
from .net import Network, eps_scale, forward, precondition_forward, predict_x0
from .schedule import Schedule
from .tasks import CorruptionStats


@dataclass
class Model:
    """A trained network plus everything needed to turn its output into an x0 prediction."""

    net: Network
    mode: str = "i2sb"
    parameterization: str = "eps"
    stats: CorruptionStats | None = None
    schedule: Schedule | None = None
    train_steps: int = 0
    seed: int | None = None

    @property
    def conditional(self) -> bool:
        return self.mode == "csgm"

    def coefficients(self, sigma2_fwd, sigma2_bwd) -> bridge.PreconditionCoeffs:
        if self.stats is None:
            raise ValueError("preconditioned model has no corruption statistics")
        if self.mode == "csgm":
            var_xt, cov = self.stats.forward_moments(sigma2_fwd)
        else:
            var_xt, cov = self.stats.bridge_moments(sigma2_fwd, sigma2_bwd)
            if self.mode == "i2sb_ot_ode":
                # x_t is the posterior mean, so the posterior variance does not contribute
                s2f, s2b = np.asarray(sigma2_fwd, dtype=np.float64), np.asarray(sigma2_bwd, dtype=np.float64)
                var_xt = var_xt - s2f * s2b / (s2f + s2b)
        return bridge.precondition_coeffs(var_xt, cov, self.stats.var_x0)

    def predict_x0(self, x, t, sigma2_fwd, sigma2_bwd, cond=None) -> np.ndarray:
        if self.parameterization == "eps":
            return predict_x0(x, forward(self.net, x, t, cond), eps_scale(sigma2_fwd))
        coeffs = self.coefficients(sigma2_fwd, sigma2_bwd)
        coeffs = bridge.PreconditionCoeffs(coeffs.c_in, coeffs.c_skip, np.maximum(coeffs.c_out, 1e-4))
        return precondition_forward(self.net, coeffs, x, t, cond)


@dataclass
class OraclePredictor:
    """Knows the true x0: emits eps = (x - x0) / sigma and maps it back through :func:`predict_x0`."""

    x0: np.ndarray
    conditional: bool = False

    def predict_x0(self, x, t, sigma2_fwd, sigma2_bwd, cond=None) -> np.ndarray:
        scale = eps_scale(sigma2_fwd)
        s = scale if np.ndim(scale) == 0 else np.reshape(scale, (-1, 1))
        eps = (np.asarray(x, dtype=np.float64) - self.x0) / s
        return predict_x0(x, eps, scale)


@dataclass
class LinearPredictor:
    """x0 = x A + c; a smooth stand-in for a network with no exact answer."""

    A: np.ndarray
    c: np.ndarray
    conditional: bool = False

    def predict_x0(self, x, t, sigma2_fwd, sigma2_bwd, cond=None) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.A + self.c


def as_predictor(model):
    if isinstance(model, Network):
        return Model(model, mode="csgm" if model.cond_dim else "i2sb")
    return model
