"""The density model: a TT coefficient tensor over per-dimension spline bases.

Two variants share the machinery.  The plain model is
``q(x) = <alpha, Phi(x)> / Z`` with ``Phi`` the rank-1 feature map; it can
dip below zero where the approximation is poor.  The squared model is
``q(x) = <alpha, Phi(x)>^2 / Z`` and is nonnegative by construction.
Evaluation, marginals, CDF slices and the partition function are all exact
chain contractions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .basis import BSplineBasis
from .tt import TTTensor, apply_gram_operator, contract_rank1, inner_product

VARIANTS = ("plain", "squared")

# log of the smallest positive double; used to floor log-densities
LOG_FLOOR = -745.0

_CHUNK = 8192


class InvalidModelError(ValueError):
    """Raised when a model cannot be normalized (nonpositive total mass)."""


class LogLikelihood(NamedTuple):
    value: float
    n_nonpositive: int


@dataclass(frozen=True)
class DensityModel:
    """TT coefficients + per-dimension bases + variant; immutable."""

    alpha: TTTensor
    bases: tuple[BSplineBasis, ...]
    variant: str = "plain"
    z: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bases", tuple(self.bases))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if len(self.bases) != self.alpha.d:
            raise ValueError("one basis per tensor dimension required")
        for k, (m, basis) in enumerate(zip(self.alpha.mode_sizes, self.bases)):
            if basis.size != m:
                raise ValueError(f"dimension {k}: mode size {m} != basis size {basis.size}")

    @property
    def d(self) -> int:
        return self.alpha.d

    @property
    def bounds(self) -> np.ndarray:
        return np.array([(b.lo, b.hi) for b in self.bases])

    def grams(self) -> list[np.ndarray]:
        return [b.gram_matrix() for b in self.bases]

    def feature_matrices(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-dimension basis evaluations of a sample batch, each ``(n, m_k)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ValueError(f"expected (n, {self.d}) samples, got shape {x.shape}")
        return [b.eval_matrix(x[:, k]) for k, b in enumerate(self.bases)]

    # ------------------------------------------------------------------
    # evaluation

    def amplitude(self, x) -> float:
        """The linear form ``<alpha, Phi(x)>`` (no squaring, no normalization)."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.d:
            raise ValueError(f"point has {x.size} coordinates, model has {self.d}")
        return contract_rank1(self.alpha, [b.eval_vector(v) for b, v in zip(self.bases, x)])

    def amplitude_many(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(len(x))
        for lo in range(0, len(x), _CHUNK):
            chunk = x[lo:lo + _CHUNK]
            out[lo:lo + _CHUNK] = batch_contract(self.alpha, self.feature_matrices(chunk))
        return out

    def evaluate(self, x) -> float:
        """Density value at a point; 0 outside the domain box."""
        s = self.amplitude(x)
        return (s * s if self.variant == "squared" else s) / self.z

    def evaluate_many(self, x: np.ndarray) -> np.ndarray:
        s = self.amplitude_many(x)
        return (s * s if self.variant == "squared" else s) / self.z

    def evaluate_clamped(self, x) -> float:
        """Like ``evaluate`` but never negative (plain-variant convenience)."""
        return max(self.evaluate(x), 0.0)

    # ------------------------------------------------------------------
    # integrals

    def partition_function(self) -> float:
        """Integral of the unnormalized density over the whole domain."""
        if self.variant == "squared":
            return inner_product(self.alpha, apply_gram_operator(self.alpha, self.grams()))
        return contract_rank1(self.alpha, [b.integral_vector() for b in self.bases])

    def normalize(self) -> "DensityModel":
        """Return a copy whose cached normalization makes the density integrate to 1."""
        z = self.partition_function()
        if not z > 0:
            raise InvalidModelError(f"partition function is {z:.6g}, cannot normalize")
        return replace(self, z=z)

    def marginal(self, values) -> float:
        """Joint marginal density of the first ``len(values)`` coordinates."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size > self.d:
            raise ValueError(f"{values.size} prefix values for a {self.d}-dimensional model")
        ops = [("point", v) for v in values] + [("integrate", None)] * (self.d - values.size)
        return self._chain(ops) / self.z

    def cdf_slice(self, prefix, a):
        """Joint quantity ``q(x_1, ..., x_{k-1}, xi_k < a)`` for ``k = len(prefix) + 1``.

        ``a`` may be a scalar or an array (an array gives one value per
        threshold).  Nondecreasing in ``a`` for the squared variant; for the
        plain variant monotonicity holds only up to approximation error.
        """
        prefix = np.asarray(prefix, dtype=float).ravel()
        if prefix.size >= self.d:
            raise ValueError("prefix must leave at least one free dimension")
        k = prefix.size
        form = self.reduced_form(k, prefix)
        basis = self.bases[k]
        if self.variant == "squared":
            out = basis.partial_quadratic_forms(form, a) / self.z
        else:
            out = basis.partial_linear_forms(form, a) / self.z
        return out if np.ndim(a) else float(out[0])

    def reduced_form(self, k: int, prefix) -> np.ndarray:
        """Coefficients of the 1D slice function along dimension ``k``.

        With the prefix coordinates fixed and all later dimensions
        integrated out, the joint quantity as a function of ``x_k`` alone is
        ``<w, f(x_k)>`` for the plain variant and ``f(x_k)^T Q f(x_k)`` for
        the squared variant; this returns ``w`` (length ``m``) or ``Q``
        (``m x m``).
        """
        squared = self.variant == "squared"
        env = np.ones((1, 1)) if squared else np.ones(1)
        for v, core, basis in zip(np.ravel(prefix), self.alpha.cores, self.bases):
            mat = np.einsum("anb,n->ab", core, basis.eval_vector(v))
            env = mat.T @ env @ mat if squared else env @ mat
        right = np.ones((1, 1)) if squared else np.ones(1)
        for j in range(self.d - 1, k, -1):
            core, basis = self.alpha.cores[j], self.bases[j]
            if squared:
                right = np.einsum("anc,nm,bmd,cd->ab", core, basis.gram_matrix(), core, right,
                                  optimize=True)
            else:
                right = np.einsum("anb,n->ab", core, basis.integral_vector()) @ right
        core = self.alpha.cores[k]
        if squared:
            return np.einsum("ab,anc,bmd,cd->nm", env, core, core, right, optimize=True)
        return np.einsum("a,anb,b->n", env, core, right)

    def _chain(self, ops):
        """Contract the chain with a point evaluation or integral per dimension."""
        squared = self.variant == "squared"
        env = np.ones((1, 1)) if squared else np.ones(1)
        for (kind, arg), core, basis in zip(ops, self.alpha.cores, self.bases):
            if kind == "point":
                mat = np.einsum("anb,n->ab", core, basis.eval_vector(arg))
                env = mat.T @ env @ mat if squared else env @ mat
            else:
                if squared:
                    env = np.einsum("ab,anc,nm,bmd->cd", env, core, basis.gram_matrix(), core,
                                    optimize=True)
                else:
                    env = env @ np.einsum("anb,n->ab", core, basis.integral_vector())
        return float(env[0, 0]) if squared else float(env[0])

    def marginal_many(self, dims, points: np.ndarray) -> np.ndarray:
        """Marginal density of an arbitrary subset of coordinates, batched.

        ``dims`` lists the kept coordinate indices (strictly increasing) and
        ``points`` has one column per kept coordinate; all other coordinates
        are integrated out.
        """
        dims = tuple(dims)
        if sorted(set(dims)) != list(dims) or any(k < 0 or k >= self.d for k in dims):
            raise ValueError(f"dims must be strictly increasing indices < {self.d}")
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != len(dims):
            raise ValueError("points must be (n, len(dims))")
        out = np.empty(len(points))
        for lo in range(0, len(points), _CHUNK):
            out[lo:lo + _CHUNK] = self._marginal_block(dims, points[lo:lo + _CHUNK])
        return out / self.z

    def _marginal_block(self, dims, points):
        n = len(points)
        squared = self.variant == "squared"
        env = np.ones((n, 1, 1)) if squared else np.ones((n, 1))
        col = 0
        for k, (core, basis) in enumerate(zip(self.alpha.cores, self.bases)):
            if k in dims:
                feats = basis.eval_matrix(points[:, col])
                col += 1
                mats = np.einsum("anb,sn->sab", core, feats)
                if squared:
                    env = np.einsum("sab,sac->sbc", env, mats)
                    env = np.einsum("sbc,sbd->scd", env, mats)
                else:
                    env = np.einsum("sa,sab->sb", env, mats)
            else:
                if squared:
                    env = np.einsum("sab,anc,nm,bmd->scd", env, core, basis.gram_matrix(), core,
                                    optimize=True)
                else:
                    env = env @ np.einsum("anb,n->ab", core, basis.integral_vector())
        return env[:, 0, 0] if squared else env[:, 0]

    # ------------------------------------------------------------------
    # likelihood

    def log_likelihood(self, x: np.ndarray) -> LogLikelihood:
        """Mean log-density over samples.

        Plain-variant points with nonpositive density contribute ``-inf``
        and are counted in ``n_nonpositive`` (squared-variant zeros
        likewise).
        """
        s = self.amplitude_many(np.asarray(x, dtype=float))
        if self.variant == "squared":
            bad = s == 0.0
            with np.errstate(divide="ignore"):
                logs = 2.0 * np.log(np.abs(s)) - np.log(self.z)
        else:
            bad = s <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                logs = np.where(bad, -np.inf, np.log(np.where(bad, 1.0, s)) - np.log(self.z))
        return LogLikelihood(float(np.mean(logs)), int(np.count_nonzero(bad)))

    # ------------------------------------------------------------------
    # serialization

    def to_dict(self) -> dict:
        return {
            "format": "tt-density-model",
            "version": 1,
            "variant": self.variant,
            "d": self.d,
            "z": self.z,
            "bases": [{"size": b.size, "lo": b.lo, "hi": b.hi, "degree": b.degree}
                      for b in self.bases],
            "cores": [c.tolist() for c in self.alpha.cores],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DensityModel":
        if doc.get("format") != "tt-density-model":
            raise ValueError("not a density model document")
        bases = tuple(BSplineBasis(b["size"], b["lo"], b["hi"], degree=b["degree"])
                      for b in doc["bases"])
        alpha = TTTensor([np.asarray(c, dtype=float) for c in doc["cores"]])
        return cls(alpha=alpha, bases=bases, variant=doc["variant"], z=float(doc["z"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "DensityModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def batch_contract(t: TTTensor, matrices) -> np.ndarray:
    """``<T, F_1[s] x ... x F_d[s]>`` for every row ``s`` of the feature matrices."""
    matrices = list(matrices)
    if len(matrices) != t.d:
        raise ValueError("need one feature matrix per dimension")
    n = len(matrices[0])
    per_row = 8 * max(c.shape[0] * c.shape[2] for c in t.cores)
    step = max(32, (32 * 2**20) // per_row)
    out = np.empty(n)
    for lo in range(0, n, step):
        env = np.ones((len(matrices[0][lo:lo + step]), 1))
        for core, feats in zip(t.cores, matrices):
            mats = np.einsum("anb,sn->sab", core, feats[lo:lo + step])
            env = np.einsum("sa,sab->sb", env, mats)
        out[lo:lo + step] = env[:, 0]
    return out
