"""Paired clean/degraded samplers p_A(x0) p_B(x1 | x0).

Two 2-D translation tasks and four degradations of procedural tiny images.
Tiny images are sums of periodic Gaussian blobs on a side x side torus, so
every pixel has the same marginal distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError

TASK_KINDS = ("gauss_shift", "two_moons_rotate", "img_blur", "img_mask", "img_downsample", "img_noise")

_DEFAULTS = {
    "gauss_shift": {"n_components": 4, "radius": 1.5, "component_std": 0.2, "offset": [2.0, 1.0], "noise_std": 0.25},
    "two_moons_rotate": {"moon_noise": 0.07, "noise_std": 0.1, "scale": 1.0},
    "img_blur": {"side": 8, "kernel_width": 3},
    "img_mask": {"side": 8, "fraction": 0.25, "noise_fill": True, "fill_std": 0.5, "shape": "center", "mask_seed": 0},
    "img_downsample": {"side": 8, "factor": 2},
    "img_noise": {"side": 8, "noise_std": 0.2},
}
_IMAGE_DEFAULTS = {"max_blobs": 6, "blob_width": [0.6, 1.2], "blob_amplitude": [0.5, 1.0]}


@dataclass
class PairedDataset:
    """Deterministic sampler for boundary pairs.

    ``sample(count, rng)`` draws from a caller-owned generator; ``pairs(seed, count)``
    is the reproducible entry point. ``information_preserving`` is True when x0
    can be recovered exactly from x1.
    """

    name: str
    dim: int
    params: dict
    information_preserving: bool
    draw: Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]] = field(repr=False)
    sample_x0: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)
    metadata: dict = field(default_factory=dict)

    def sample(self, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if count == 0:
            return np.zeros((0, self.dim)), np.zeros((0, self.dim))
        return self.draw(rng, int(count))

    def pairs(self, seed: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        return self.sample(count, np.random.default_rng(seed))

    def descriptor(self) -> dict:
        return {"kind": self.name, "params": self.params}


def _merge(kind: str, params: dict | None) -> dict:
    merged = dict(_DEFAULTS[kind])
    if kind.startswith("img_"):
        merged = {**_IMAGE_DEFAULTS, **merged}
    for k, v in (params or {}).items():
        if k not in merged:
            raise ConfigError(f"unknown parameter {k!r} for task {kind!r}")
        merged[k] = v
    return merged


# -- 2-D tasks ---------------------------------------------------------------


def _gauss_shift(p):
    k = int(p["n_components"])
    if k < 1 or p["component_std"] <= 0 or p["noise_std"] < 0:
        raise ConfigError("gauss_shift needs n_components >= 1, component_std > 0, noise_std >= 0")
    offset = np.asarray(p["offset"], dtype=np.float64)
    if offset.shape != (2,):
        raise ConfigError("gauss_shift offset must have two components")
    angles = 2 * np.pi * np.arange(k) / k
    centers = p["radius"] * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def sample_x0(rng, n):
        comp = rng.integers(k, size=n)
        return centers[comp] + p["component_std"] * rng.standard_normal((n, 2))

    def draw(rng, n):
        x0 = sample_x0(rng, n)
        return x0, x0 + offset + p["noise_std"] * rng.standard_normal((n, 2))

    meta = {"corruption": f"x1 = x0 + {offset.tolist()} + N(0, {p['noise_std']}^2)"}
    return 2, draw, sample_x0, p["noise_std"] == 0, meta


def _moons(rng, n, noise):
    upper = rng.random(n) < 0.5
    theta = np.pi * rng.random(n)
    pts = np.where(
        upper[:, None],
        np.stack([np.cos(theta), np.sin(theta)], axis=1),
        np.stack([1 - np.cos(theta), 0.5 - np.sin(theta)], axis=1),
    )
    pts = pts - np.array([0.5, 0.25])
    return pts + noise * rng.standard_normal((n, 2))


def _two_moons_rotate(p):
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])  # row vectors times rot = 90 deg counter-clockwise

    def sample_x0(rng, n):
        return p["scale"] * _moons(rng, n, p["moon_noise"])

    def draw(rng, n):
        x0 = sample_x0(rng, n)
        return x0, x0 @ rot + p["noise_std"] * rng.standard_normal((n, 2))

    meta = {"corruption": f"x1 = rot90(x0) + N(0, {p['noise_std']}^2)"}
    return 2, draw, sample_x0, p["noise_std"] == 0, meta


# -- tiny images -------------------------------------------------------------


def _blob_sampler(p):
    side = int(p["side"])
    if side not in (8, 16):
        raise ConfigError(f"image side must be 8 or 16, got {side}")
    max_blobs = int(p["max_blobs"])
    wlo, whi = p["blob_width"]
    alo, ahi = p["blob_amplitude"]
    grid = np.arange(side, dtype=np.float64)

    def sample_x0(rng, n):
        counts = rng.integers(1, max_blobs + 1, size=n)
        centers = rng.uniform(0, side, size=(n, max_blobs, 2))
        widths = rng.uniform(wlo, whi, size=(n, max_blobs))
        amps = rng.uniform(alo, ahi, size=(n, max_blobs)) * (np.arange(max_blobs) < counts[:, None])
        # periodic distance on the torus
        dr = np.abs(grid[None, None, :] - centers[..., 0:1])
        dc = np.abs(grid[None, None, :] - centers[..., 1:2])
        dr = np.minimum(dr, side - dr)
        dc = np.minimum(dc, side - dc)
        d2 = dr[..., :, None] ** 2 + dc[..., None, :] ** 2
        img = np.sum(amps[..., None, None] * np.exp(-0.5 * d2 / widths[..., None, None] ** 2), axis=1)
        return img.reshape(n, side * side)

    return side, sample_x0


def _circular_blur(images, side, width):
    img = images.reshape(-1, side, side)
    out = np.zeros_like(img)
    half = width // 2
    for dr in range(-half, half + 1):
        for dc in range(-half, half + 1):
            out += np.roll(img, (dr, dc), axis=(1, 2))
    return (out / (width * width)).reshape(images.shape)


def center_mask(side: int, fraction: float) -> np.ndarray:
    """Boolean mask of the round(fraction * side^2) pixels closest to the image center."""
    m = int(round(fraction * side * side))
    c = (side - 1) / 2
    rr, cc = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    dist = np.maximum(np.abs(rr - c), np.abs(cc - c)) + 1e-3 * np.hypot(rr - c, cc - c)
    order = np.argsort(dist.ravel(), kind="stable")
    mask = np.zeros(side * side, dtype=bool)
    mask[order[:m]] = True
    return mask


def random_walk_mask(side: int, fraction: float, seed: int = 0) -> np.ndarray:
    """Boolean mask traced by a lattice random walk until round(fraction * side^2) pixels are covered.

    The walk starts at a seeded pixel and moves to one of the four neighbours
    (clipped at the border), so the region is connected and irregular.
    """
    m = int(round(fraction * side * side))
    rng = np.random.default_rng(seed)
    mask = np.zeros((side, side), dtype=bool)
    r, c = (int(v) for v in rng.integers(0, side, size=2))
    moves = np.array([[0, 1], [0, -1], [1, 0], [-1, 0]])
    while mask.sum() < m:
        mask[r, c] = True
        dr, dc = moves[rng.integers(4)]
        r, c = min(max(r + dr, 0), side - 1), min(max(c + dc, 0), side - 1)
    return mask.ravel()


MASK_SHAPES = ("center", "walk")


def _img_task(kind, p):
    side, sample_x0 = _blob_sampler(p)
    dim = side * side
    if kind == "img_blur":
        width = int(p["kernel_width"])
        if width < 1 or width % 2 == 0:
            raise ConfigError(f"kernel_width must be a positive odd integer, got {width}")

        def corrupt(rng, x0):
            return _circular_blur(x0, side, width)

        # the box kernel's DFT has a zero iff gcd(width, side) > 1
        preserving = int(np.gcd(width, side)) == 1
        meta = {"corruption": f"circular {width}x{width} box blur"}
    elif kind == "img_mask":
        frac = float(p["fraction"])
        if not 0 <= frac < 1:
            raise ConfigError(f"mask fraction must be in [0, 1), got {frac}")
        shape = p["shape"]
        if shape not in MASK_SHAPES:
            raise ConfigError(f"mask shape must be one of {MASK_SHAPES}, got {shape!r}")
        mask = center_mask(side, frac) if shape == "center" else random_walk_mask(side, frac, int(p["mask_seed"]))
        noise_fill, fill_std = bool(p["noise_fill"]), float(p["fill_std"])

        def corrupt(rng, x0):
            x1 = x0.copy()
            n_masked = int(mask.sum())
            fill = fill_std * rng.standard_normal((len(x0), n_masked)) if noise_fill else 0.0
            x1[:, mask] = fill
            return x1

        preserving = not mask.any()
        meta = {
            "corruption": f"{shape} mask, {int(mask.sum())} of {dim} pixels, "
            + (f"filled with N(0, {fill_std}^2)" if noise_fill else "zeroed"),
            "mask": mask,
        }
    elif kind == "img_downsample":
        f = int(p["factor"])
        if f < 1 or side % f:
            raise ConfigError(f"downsample factor must divide the side, got {f}")

        def corrupt(rng, x0):
            img = x0.reshape(-1, side // f, f, side // f, f).mean(axis=(2, 4))
            return np.repeat(np.repeat(img, f, axis=1), f, axis=2).reshape(x0.shape)

        preserving = f == 1
        meta = {"corruption": f"{f}x average pool then nearest upsample"}
    else:
        s = float(p["noise_std"])
        if s < 0:
            raise ConfigError("noise_std must be nonnegative")

        def corrupt(rng, x0):
            return x0 + s * rng.standard_normal(x0.shape)

        preserving = s == 0
        meta = {"corruption": f"additive N(0, {s}^2)"}

    def draw(rng, n):
        x0 = sample_x0(rng, n)
        return x0, corrupt(rng, x0)

    return dim, draw, sample_x0, preserving, meta


def make_task(kind: str, params: dict | None = None) -> PairedDataset:
    """Build a paired task; unspecified parameters take their defaults.

    Raises:
        ConfigError: unknown kind, unknown parameter or invalid value.
    """
    if kind not in TASK_KINDS:
        raise ConfigError(f"task kind must be one of {TASK_KINDS}, got {kind!r}")
    p = _merge(kind, params)
    if kind == "gauss_shift":
        dim, draw, sample_x0, preserving, meta = _gauss_shift(p)
    elif kind == "two_moons_rotate":
        dim, draw, sample_x0, preserving, meta = _two_moons_rotate(p)
    else:
        dim, draw, sample_x0, preserving, meta = _img_task(kind, p)
    return PairedDataset(kind, dim, p, preserving, draw, sample_x0, meta)


@dataclass(frozen=True)
class CorruptionStats:
    """Per-dimension averages of second moments (trace / dim)."""

    var_x0: float
    var_x1: float
    cov_x0_x1: float
    n_samples: int

    def bridge_moments(self, sigma2_fwd, sigma2_bwd):
        """(Var[X_t], Cov[X_0, X_t]) for X_t drawn from the bridge posterior."""
        s2f = np.asarray(sigma2_fwd, dtype=np.float64)
        s2b = np.asarray(sigma2_bwd, dtype=np.float64)
        total = s2f + s2b
        w0, w1 = s2b / total, s2f / total
        var_xt = w0 * w0 * self.var_x0 + w1 * w1 * self.var_x1 + 2 * w0 * w1 * self.cov_x0_x1 + s2f * s2b / total
        return var_xt, w0 * self.var_x0 + w1 * self.cov_x0_x1

    def forward_moments(self, sigma2_fwd):
        """(Var[X_t], Cov[X_0, X_t]) for X_t = X_0 + sigma_t z."""
        return self.var_x0 + np.asarray(sigma2_fwd, dtype=np.float64), np.full_like(np.asarray(sigma2_fwd, dtype=np.float64), self.var_x0)

    def as_dict(self) -> dict:
        return {"var_x0": self.var_x0, "var_x1": self.var_x1, "cov_x0_x1": self.cov_x0_x1, "n_samples": self.n_samples}


def corruption_stats(task: PairedDataset, n_samples: int, rng: np.random.Generator) -> CorruptionStats:
    """Unbiased empirical second moments averaged over dimensions."""
    if n_samples < 1000:
        raise ConfigError("corruption_stats needs at least 1000 samples")
    x0, x1 = task.sample(n_samples, rng)
    c0 = x0 - x0.mean(axis=0)
    c1 = x1 - x1.mean(axis=0)
    denom = (n_samples - 1) * task.dim
    return CorruptionStats(
        var_x0=float(np.sum(c0 * c0) / denom),
        var_x1=float(np.sum(c1 * c1) / denom),
        cov_x0_x1=float(np.sum(c0 * c1) / denom),
        n_samples=n_samples,
    )


def export_pairs_csv(path, x0: np.ndarray, x1: np.ndarray) -> None:
    """Write pairs as rows: index, x0_0..x0_{d-1}, x1_0..x1_{d-1}."""
    d = x0.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *(f"x0_{i}" for i in range(d)), *(f"x1_{i}" for i in range(d))])
        for i, (a, b) in enumerate(zip(x0, x1)):
            w.writerow([i, *(repr(float(v)) for v in a), *(repr(float(v)) for v in b)])
