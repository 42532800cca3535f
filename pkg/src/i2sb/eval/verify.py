"""Exact-math verification suite and coefficient-mutation harness.

Each check compares an implementation against an independent route to the same
quantity (linear-Gaussian chain composition, precision addition, closed-form
straight-line paths, the additive-noise preconditioning formulas, finite
differences, an oracle x0-predictor) and records its worst error and runtime.

The :func:`mutation` context manager swaps one coefficient in the bridge
module for a slightly perturbed version; a sound suite must fail under every
mutant in :data:`MUTANTS`.
"""

from __future__ import annotations

import contextlib
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import bridge
from ..model import OraclePredictor
from ..net import init_network, loss_and_grad
from ..sample import generate_i2sb, integrate_ot_ode
from ..schedule import BETA_PROFILES, SPACINGS, build_schedule, subset_for_nfe
from ..tasks import CorruptionStats

NFE_GRID = (1, 2, 5, 10, 50, 100, 500, 1000)
MUTATION_SCALE = 1e-3


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    seconds: float
    time_budget: float | None
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def total_seconds(self) -> float:
        return sum(c.seconds for c in self.checks)

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed, "checks": [asdict(c) for c in self.checks]}, indent=2)

    def table(self) -> str:
        lines = [f"{'check':<28} {'status':<6} {'max_error':>11} {'tol':>9} {'seconds':>8}"]
        for c in self.checks:
            lines.append(
                f"{c.name:<28} {'PASS' if c.passed else 'FAIL':<6} {c.max_error:>11.3e} {c.tolerance:>9.1e} {c.seconds:>8.3f}"
            )
        lines.append(f"{'total':<28} {'PASS' if self.passed else 'FAIL':<6} {'':>11} {'':>9} {self.total_seconds:>8.3f}")
        return "\n".join(lines)


def bundled_schedules(n_values=(2, 4, 8, 16, 100, 1000)):
    """Every profile/spacing combination at each size, plus all NFE subsets that fit."""
    out = []
    for profile in BETA_PROFILES:
        for spacing in SPACINGS:
            for n in n_values:
                sched = build_schedule(n, profile, 1.0, spacing)
                out.append(sched)
                out.extend(subset_for_nfe(sched, k) for k in NFE_GRID if k < n)
    return out


def check_marginalization(seed: int = 0) -> float:
    """Worst |mean| or |var| gap between the composed DDPM chain and the closed-form bridge posterior."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n_steps in (2, 4, 8, 16):
        for profile in BETA_PROFILES:
            sched = build_schedule(n_steps, profile, 1.0, "uniform")
            for d in (1, 2, 8):
                x0, xN = rng.standard_normal((2, d))
                for n in range(n_steps):
                    chain = bridge.compose_chain_oracle(sched, n, x0, xN)
                    post = bridge.posterior_params(sched.sigma2_fwd[n], sched.sigma2_bwd[n], x0, xN)
                    worst = max(worst, float(np.max(np.abs(chain.mean - post.mean))), abs(float(chain.var) - float(post.var)))
    return worst


def check_gaussian_product(seed: int = 0, count: int = 1000) -> float:
    rng = np.random.default_rng(seed)
    s2f = rng.uniform(1e-3, 2.0, count)
    s2b = rng.uniform(1e-3, 2.0, count)
    x0 = rng.standard_normal((count, 3))
    x1 = rng.standard_normal((count, 3))
    a = bridge.posterior_params(s2f, s2b, x0, x1)
    b = bridge.gaussian_product_check(s2f, s2b, x0, x1)
    return max(float(np.max(np.abs(a.mean - b.mean))), float(np.max(np.abs(a.var - b.var))))


def check_ot_limit_mean(seed: int = 0) -> float:
    """Constant-rate posterior mean against the straight line (1 - t) x0 + t x1 on every grid time."""
    rng = np.random.default_rng(seed)
    x0, x1 = rng.standard_normal((2, 4))
    worst = 0.0
    for spacing in SPACINGS:
        sched = build_schedule(100, "constant", 1.0, spacing)
        t = sched.times[:, None]
        post = bridge.posterior_params(sched.sigma2_fwd, sched.sigma2_bwd, np.broadcast_to(x0, (len(t), 4)), np.broadcast_to(x1, (len(t), 4)))
        worst = max(worst, float(np.max(np.abs(post.mean - ((1 - t) * x0 + t * x1)))))
    return worst


def check_ot_ode_line(seed: int = 0, n_steps: int = 100) -> float:
    """RK4 OT-ODE through an oracle predictor; worst distance from the straight line over the trajectory."""
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((16, 2))
    x1 = rng.standard_normal((16, 2))
    sched = build_schedule(n_steps, "constant", 1.0, "uniform")
    traj = integrate_ot_ode(OraclePredictor(x0), x1, sched, method="rk4", capture="all")
    return max(float(np.max(np.abs(x - ((1 - t) * x0 + t * x1)))) for t, x in zip(traj.times, traj.states))


def check_variance_conservation() -> float:
    worst = 0.0
    for sched in bundled_schedules():
        total = sched.sigma2_fwd + sched.sigma2_bwd
        worst = max(worst, float(np.max(np.abs(total - sched.sigma2_total))))
    return worst


def check_karras_reduction() -> float:
    """Additive-noise statistics (x_t = x0 + sigma z) against the closed-form c_in, c_skip, c_out."""
    worst = 0.0
    for sd in (0.25, 0.5, 1.0, 2.0):
        stats = CorruptionStats(var_x0=sd * sd, var_x1=sd * sd, cov_x0_x1=sd * sd, n_samples=0)
        sigma = np.geomspace(1e-3, 80.0, 64)
        var_xt, cov = stats.forward_moments(sigma * sigma)
        c = bridge.precondition_coeffs(var_xt, cov, stats.var_x0)
        denom = sd * sd + sigma * sigma
        ref = (1 / np.sqrt(denom), sd * sd / denom, sigma * sd / np.sqrt(denom))
        for got, want in zip((c.c_in, c.c_skip, c.c_out), ref):
            worst = max(worst, float(np.max(np.abs(got - want))))
    return worst


GRADIENT_MATRIX = [
    (act, hidden, cond) for act in ("silu", "relu") for hidden in ((24,), (16, 16)) for cond in (0, 3)
]


def gradient_error(activation="silu", hidden=(16,), cond_dim=0, seed=0, n_probe=256, h=1e-6) -> float:
    """Relative l2 gap between central differences and the analytic gradient over sampled parameters.

    Uses ||g_fd - g|| / max(||g_fd||, ||g||) over the probed coordinates, which
    stays meaningful when individual gradient entries are tiny.
    """
    rng = np.random.default_rng(seed)
    d = 3
    net = init_network(d, hidden, time_embed_dim=8, cond_dim=cond_dim, activation=activation, seed=seed)
    net.params += 0.1 * rng.standard_normal(net.n_params)
    x = rng.standard_normal((6, d))
    target = rng.standard_normal((6, d))
    t = rng.uniform(0.05, 1.0, 6)
    cond = rng.standard_normal((6, cond_dim)) if cond_dim else None
    _, grad = loss_and_grad(net, x, target, t, cond)
    idx = rng.choice(net.n_params, size=min(n_probe, net.n_params), replace=False)
    fd = np.empty(len(idx))
    base = net.params.copy()
    for k, i in enumerate(idx):
        net.params[i] = base[i] + h
        lp, _ = loss_and_grad(net, x, target, t, cond)
        net.params[i] = base[i] - h
        lm, _ = loss_and_grad(net, x, target, t, cond)
        net.params[i] = base[i]
        fd[k] = (lp - lm) / (2 * h)
    an = grad.flat[idx]
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(fd), np.linalg.norm(an), 1e-300))


def check_gradients() -> float:
    return max(gradient_error(a, h, c) for a, h, c in GRADIENT_MATRIX)


def check_oracle_sampler(seed: int = 0) -> float:
    """Posterior sampling with a perfect x0-predictor must land on x0 at every NFE."""
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((32, 3))
    x1 = x0 + rng.standard_normal((32, 3))
    fine = build_schedule(1000, "symmetric", 1.0, "quadratic")
    oracle = OraclePredictor(x0)
    worst = 0.0
    for nfe in (1, 2, 10, 100, 1000):
        sched = subset_for_nfe(fine, nfe)
        for stochastic in (True, False):
            out = generate_i2sb(oracle, x1, sched, stochastic=stochastic, seed=seed, capture=1).final
            worst = max(worst, float(np.max(np.abs(out - x0))))
    return worst


CHECKS = [
    # name, function, tolerance, time budget (s)
    ("marginalization", check_marginalization, 1e-10, 1.0),
    ("gaussian_product", check_gaussian_product, 1e-12, 1.0),
    ("ot_limit_mean", check_ot_limit_mean, 1e-12, 1.0),
    ("ot_ode_rk4_line", check_ot_ode_line, 1e-6, 1.0),
    ("variance_conservation", check_variance_conservation, 1e-12, None),
    ("karras_reduction", check_karras_reduction, 1e-12, None),
    ("gradient_fd", check_gradients, 1e-5, 30.0),
    ("oracle_sampler", check_oracle_sampler, 1e-8, 10.0),
]


def run_check(name: str, fn, tol: float, budget: float | None) -> CheckResult:
    start = time.perf_counter()
    try:
        err = float(fn())
        detail = ""
    except Exception as exc:  # a crash is a failure, not an abort of the whole suite
        err, detail = float("inf"), f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    ok = bool(np.isfinite(err) and err < tol and (budget is None or elapsed < budget))
    if np.isfinite(err) and err < tol and not ok:
        detail = f"over time budget of {budget} s"
    return CheckResult(name, ok, err, tol, elapsed, budget, detail)


def run_verification_suite(names=None) -> VerificationReport:
    """Run every check (or just ``names``) and return the pass/fail table."""
    selected = [c for c in CHECKS if names is None or c[0] in names]
    return VerificationReport([run_check(*c) for c in selected])


# --- mutation harness -------------------------------------------------------------

_ORIGINALS = {
    "posterior_params": bridge.posterior_params,
    "ddpm_posterior_params": bridge.ddpm_posterior_params,
    "precondition_coeffs": bridge.precondition_coeffs,
    "ot_ode_velocity": bridge.ot_ode_velocity,
}


def _scaled_mean_weight(fn, which):
    """Wrap a two-point Gaussian kernel so the weight on argument ``which`` is off by MUTATION_SCALE."""

    def mutant(s2a, s2b, xa, xb):
        out = fn(s2a, s2b, xa, xb)
        ref = fn(s2a, s2b, np.zeros_like(np.asarray(xa, dtype=float)), np.zeros_like(np.asarray(xb, dtype=float)))
        arg = np.asarray(xa if which == 0 else xb, dtype=np.float64)
        shifted = fn(s2a, s2b, arg if which == 0 else np.zeros_like(arg), arg if which == 1 else np.zeros_like(arg))
        return bridge.PosteriorParams(out.mean + MUTATION_SCALE * (shifted.mean - ref.mean), out.var)

    return mutant


def _scaled_var(fn):
    def mutant(*args):
        out = fn(*args)
        return bridge.PosteriorParams(out.mean, out.var * (1 + MUTATION_SCALE))

    return mutant


def _scaled_coeff(field_name):
    def mutant(*args):
        c = _ORIGINALS["precondition_coeffs"](*args)
        vals = {"c_in": c.c_in, "c_skip": c.c_skip, "c_out": c.c_out}
        vals[field_name] = vals[field_name] * (1 + MUTATION_SCALE)
        return bridge.PreconditionCoeffs(**vals)

    return mutant


def _scaled_velocity(x_t, x0, beta_t, sigma2_fwd):
    return (1 + MUTATION_SCALE) * _ORIGINALS["ot_ode_velocity"](x_t, x0, beta_t, sigma2_fwd)


MUTANTS = {
    "posterior_w0": ("posterior_params", lambda: _scaled_mean_weight(_ORIGINALS["posterior_params"], 0)),
    "posterior_w1": ("posterior_params", lambda: _scaled_mean_weight(_ORIGINALS["posterior_params"], 1)),
    "posterior_var": ("posterior_params", lambda: _scaled_var(_ORIGINALS["posterior_params"])),
    "ddpm_w0": ("ddpm_posterior_params", lambda: _scaled_mean_weight(_ORIGINALS["ddpm_posterior_params"], 0)),
    "ddpm_w1": ("ddpm_posterior_params", lambda: _scaled_mean_weight(_ORIGINALS["ddpm_posterior_params"], 1)),
    "ddpm_var": ("ddpm_posterior_params", lambda: _scaled_var(_ORIGINALS["ddpm_posterior_params"])),
    "precond_c_in": ("precondition_coeffs", lambda: _scaled_coeff("c_in")),
    "precond_c_skip": ("precondition_coeffs", lambda: _scaled_coeff("c_skip")),
    "precond_c_out": ("precondition_coeffs", lambda: _scaled_coeff("c_out")),
    "ot_velocity": ("ot_ode_velocity", lambda: _scaled_velocity),
}


@contextlib.contextmanager
def mutation(name: str):
    """Temporarily replace one bridge coefficient by a perturbed version (see :data:`MUTANTS`)."""
    if name not in MUTANTS:
        raise KeyError(f"unknown mutation {name!r}; choose from {sorted(MUTANTS)}")
    attr, factory = MUTANTS[name]
    original = getattr(bridge, attr)
    setattr(bridge, attr, factory())
    try:
        yield
    finally:
        setattr(bridge, attr, original)
