"""Datasets: synthetic generators for the experiment suite and CSV ingestion.

Every generator is deterministic given its seed.  Domain bounds always come
from the samples themselves (min/max per dimension, expanded by a relative
1e-6 margin) so that every sample lies strictly inside the spline support.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

BOUNDS_MARGIN = 1e-6
DEFAULT_VAL_FRACTION = 0.1


def bounds_from_samples(x: np.ndarray) -> np.ndarray:
    """Per-dimension ``[min, max]`` expanded by ``1e-6 * (max - min)``."""
    x = np.asarray(x, dtype=float)
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    span[span == 0] = 1.0  # degenerate columns still need a nonempty interval
    return np.stack([lo - BOUNDS_MARGIN * span, hi + BOUNDS_MARGIN * span], axis=1)


@dataclass(frozen=True)
class Dataset:
    """Sample matrix with per-dimension bounds and a train/validation split."""

    samples: np.ndarray
    bounds: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    seed: int = 0
    log_density: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def from_samples(cls, samples, val_fraction: float = DEFAULT_VAL_FRACTION,
                     seed: int = 0, log_density=None) -> "Dataset":
        samples = np.ascontiguousarray(samples, dtype=float)
        if samples.ndim != 2 or len(samples) == 0:
            raise ValueError("need a nonempty (n, d) sample matrix")
        if not 0.0 <= val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        perm = np.random.default_rng([seed, 0xD5]).permutation(len(samples))
        n_val = int(round(val_fraction * len(samples)))
        return cls(samples=samples, bounds=bounds_from_samples(samples),
                   train_idx=np.sort(perm[n_val:]), val_idx=np.sort(perm[:n_val]),
                   seed=seed, log_density=log_density)

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def train(self) -> np.ndarray:
        return self.samples[self.train_idx]

    @property
    def val(self) -> np.ndarray:
        return self.samples[self.val_idx]

    def manifest(self) -> dict:
        return {"n": self.n, "d": self.d, "seed": self.seed,
                "bounds": self.bounds.tolist()}


# ----------------------------------------------------------------------
# generators


def gen_two_moons(n: int, noise: float = 0.05, seed: int = 0,
                  val_fraction: float = DEFAULT_VAL_FRACTION) -> Dataset:
    """Two interleaving unit half-circles, the second offset by (1, 0.5)."""
    rng = np.random.default_rng(seed)
    n_top = (n + 1) // 2
    t_top = rng.uniform(0.0, np.pi, n_top)
    t_bot = rng.uniform(0.0, np.pi, n - n_top)
    top = np.stack([np.cos(t_top), np.sin(t_top)], axis=1)
    bot = np.stack([1.0 - np.cos(t_bot), 0.5 - np.sin(t_bot)], axis=1)
    pts = np.concatenate([top, bot])
    if noise:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return Dataset.from_samples(pts, val_fraction, seed)


def gen_checkerboard(n: int, seed: int = 0,
                     val_fraction: float = DEFAULT_VAL_FRACTION) -> Dataset:
    """Uniform on the 8 black cells of a 4x4 board over [0, 4]^2."""
    rng = np.random.default_rng(seed)
    row = rng.integers(0, 4, n)
    col = 2 * rng.integers(0, 2, n) + (row % 2)
    pts = np.stack([col, row], axis=1) + rng.uniform(size=(n, 2))
    return Dataset.from_samples(pts.astype(float), val_fraction, seed)


def gen_corner_mixture(d: int, n_components: int, noise_dims: int = 0,
                       scale: float = 1.0, seed: int = 0, n: int = 100_000,
                       val_fraction: float = DEFAULT_VAL_FRACTION) -> Dataset:
    """Equal-weight isotropic Gaussians at cube corners plus noise dimensions.

    The first ``d - noise_dims`` coordinates hold the mixture, with
    components of width ``scale`` at distinct corners of a cube of side
    ``6 * scale`` (well separated).  When ``n_components`` is exactly one
    less than the number of corners the empty corner is the all-ones one;
    otherwise corners are drawn at random.  Remaining coordinates are
    standard Gaussian noise.  The analytic log-density is attached for
    cross-entropy evaluation.
    """
    base = d - noise_dims
    if base < 1:
        raise ValueError("need at least one mixture dimension")
    if n_components < 1 or n_components > 2 ** base:
        raise ValueError(f"n_components must be in [1, {2 ** base}]")
    rng = np.random.default_rng(seed)
    all_corners = ((np.arange(2 ** base)[:, None] >> np.arange(base)) & 1).astype(float)
    if n_components == 2 ** base - 1:
        corners = all_corners[:-1]  # every corner except (1, ..., 1)
    else:
        corners = all_corners[rng.choice(2 ** base, size=n_components, replace=False)]
    centers = corners * 6.0 * scale

    which = rng.integers(0, n_components, n)
    pts = np.empty((n, d))
    pts[:, :base] = centers[which] + rng.normal(scale=scale, size=(n, base))
    if noise_dims:
        pts[:, base:] = rng.normal(size=(n, noise_dims))

    def log_density(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        sq = ((x[:, None, :base] - centers[None]) ** 2).sum(axis=2)
        comp = -0.5 * sq / scale**2 - base * np.log(2 * np.pi * scale**2) / 2
        out = _logsumexp(comp) - np.log(n_components)
        if noise_dims:
            out = out - 0.5 * (x[:, base:] ** 2).sum(axis=1) \
                - noise_dims * np.log(2 * np.pi) / 2
        return out

    return Dataset.from_samples(pts, val_fraction, seed, log_density=log_density)


def _logsumexp(a: np.ndarray) -> np.ndarray:
    peak = a.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(a - peak).sum(axis=1, keepdims=True)))[:, 0]


# ----------------------------------------------------------------------
# CSV in/out


def load_csv(path, has_header: bool | None = None,
             val_fraction: float = DEFAULT_VAL_FRACTION, seed: int = 0) -> Dataset:
    """Read a numeric d-column CSV; rows with NaN/inf are dropped and counted."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    if has_header is None:
        has_header = not _all_numeric(rows[0])
    if has_header:
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value ({exc})") from exc
    keep = np.isfinite(values).all(axis=1)
    dropped = int(len(values) - keep.sum())
    if dropped:
        logger.warning("%s: dropped %d rows with NaN/inf values", path, dropped)
    if not keep.any():
        raise ValueError(f"{path}: no finite rows")
    return Dataset.from_samples(values[keep], val_fraction, seed)


def _all_numeric(row) -> bool:
    try:
        [float(v) for v in row]
        return True
    except ValueError:
        return False


def save_csv(path, x: np.ndarray):
    """Write samples as CSV with an ``x1,...,xd`` header; byte-stable output."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    header = ",".join(f"x{k + 1}" for k in range(x.shape[1]))
    np.savetxt(path, x, fmt="%.17g", delimiter=",", header=header, comments="")
