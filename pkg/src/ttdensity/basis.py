"""One-dimensional B-spline bases and the integrals the density model needs.

A basis is a set of ``m`` B-splines of a given degree on a clamped uniform
knot vector over ``[lo, hi]``.  Clamping (end knots repeated ``degree + 1``
times) makes the basis a partition of unity up to and including the
boundary.  All integrals are computed with composite Gauss-Legendre
quadrature using ``degree + 1`` points per knot interval, which is exact
for products of two basis functions (piecewise degree ``2 * degree``).
"""

from __future__ import annotations

from functools import cached_property

import numpy as np


class BSplineBasis:
    """B-spline basis of ``size`` functions on ``[lo, hi]`` with uniform knots."""

    def __init__(self, size: int, lo: float, hi: float, degree: int = 2):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        if size < degree + 1:
            raise ValueError(f"need at least degree+1={degree + 1} basis functions, got {size}")
        if not hi > lo:
            raise ValueError(f"empty domain [{lo}, {hi}]")
        self.degree = int(degree)
        self.size = int(size)
        self.lo = float(lo)
        self.hi = float(hi)
        # clamped uniform knot vector: lo/hi repeated degree+1 times,
        # size - degree - 1 uniformly spaced interior knots
        self.breakpoints = np.linspace(self.lo, self.hi, self.size - self.degree + 1)
        self.knots = np.concatenate([
            np.full(self.degree, self.lo),
            self.breakpoints,
            np.full(self.degree, self.hi),
        ])

    def __repr__(self):
        return (f"BSplineBasis(size={self.size}, lo={self.lo:g}, hi={self.hi:g}, "
                f"degree={self.degree})")

    def __eq__(self, other):
        return (isinstance(other, BSplineBasis)
                and self.degree == other.degree and self.size == other.size
                and self.lo == other.lo and self.hi == other.hi)

    # ------------------------------------------------------------------
    # evaluation

    def eval_vector(self, x: float) -> np.ndarray:
        """All basis values ``(f_1(x), ..., f_m(x))``; zero outside [lo, hi]."""
        return self.eval_matrix(np.asarray([x], dtype=float))[0]

    def eval_matrix(self, x: np.ndarray) -> np.ndarray:
        """Basis values for a batch of points, shape ``(len(x), size)``."""
        x = np.asarray(x, dtype=float)
        values, start = self.eval_sparse(x)
        out = np.zeros((x.size, self.size))
        cols = start[:, None] + np.arange(self.degree + 1)[None, :]
        np.put_along_axis(out, cols, values, axis=1)
        return out

    def eval_sparse(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero basis values at each point.

        Returns ``(values, start)`` where ``values`` has shape
        ``(len(x), degree + 1)`` and row ``i`` holds
        ``f_{start[i]}(x_i), ..., f_{start[i] + degree}(x_i)``.  Points
        outside ``[lo, hi]`` get all-zero rows (with ``start = 0``).
        """
        x = np.asarray(x, dtype=float).ravel()
        n, p = x.size, self.degree
        inside = (x >= self.lo) & (x <= self.hi)
        # interval index in [0, n_intervals - 1]; x == hi maps to the last one
        span = np.searchsorted(self.breakpoints, x, side="right") - 1
        span = np.clip(span, 0, len(self.breakpoints) - 2)
        values = np.zeros((n, p + 1))
        values[:, 0] = 1.0
        if p > 0:
            t = self.knots
            g = span + p  # index into the full knot vector: t[g] <= x < t[g+1]
            left = np.empty((n, p + 1))
            right = np.empty((n, p + 1))
            # triangular Cox-de Boor recurrence over the p+1 active splines
            for r in range(1, p + 1):
                left[:, r] = x - t[g + 1 - r]
                right[:, r] = t[g + r] - x
                saved = np.zeros(n)
                for k in range(r):
                    denom = right[:, k + 1] + left[:, r - k]
                    term = values[:, k] / denom
                    values[:, k] = saved + right[:, k + 1] * term
                    saved = left[:, r - k] * term
                values[:, r] = saved
        values[~inside] = 0.0
        start = np.where(inside, span, 0)
        return values, start

    # ------------------------------------------------------------------
    # quadrature machinery

    @cached_property
    def _gauss_rule(self) -> tuple[np.ndarray, np.ndarray]:
        # degree+1 points are exact through degree 2*degree+1 >= 2*degree
        return np.polynomial.legendre.leggauss(self.degree + 1)

    def _map_rule(self, a, b):
        """Gauss nodes/weights mapped onto [a, b]; a, b may be arrays."""
        xi, w = self._gauss_rule
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        nodes = 0.5 * (a + b)[..., None] + half[..., None] * xi
        weights = half[..., None] * w
        return nodes, weights

    @cached_property
    def _interval_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes/weights for every knot interval, flattened."""
        nodes, weights = self._map_rule(self.breakpoints[:-1], self.breakpoints[1:])
        return nodes.ravel(), weights.ravel()

    @cached_property
    def _interval_features(self) -> np.ndarray:
        nodes, _ = self._interval_nodes
        return self.eval_matrix(nodes)

    # ------------------------------------------------------------------
    # integrals

    @cached_property
    def integral_cumulative(self) -> np.ndarray:
        """``C[j, i] = int_lo^breakpoints[j] f_i``, shape ``(n_breaks, size)``."""
        nodes, weights = self._interval_nodes
        feats = self._interval_features
        nq = self.degree + 1
        per_interval = (weights[:, None] * feats).reshape(-1, nq, self.size).sum(axis=1)
        out = np.zeros((len(self.breakpoints), self.size))
        np.cumsum(per_interval, axis=0, out=out[1:])
        return out

    def integral_vector(self) -> np.ndarray:
        """``int f_i`` over the whole domain, length ``size``."""
        return self.integral_cumulative[-1].copy()

    def partial_integral_vector(self, a) -> np.ndarray:
        """``int_{-inf}^{a} f_i`` for scalar or array ``a``.

        Shape ``(size,)`` for a scalar, ``(len(a), size)`` for an array.
        """
        a_arr = np.atleast_1d(np.asarray(a, dtype=float))
        clipped = np.clip(a_arr, self.lo, self.hi)
        j = np.searchsorted(self.breakpoints, clipped, side="right") - 1
        j = np.clip(j, 0, len(self.breakpoints) - 2)
        out = self.integral_cumulative[j].copy()
        nodes, weights = self._map_rule(self.breakpoints[j], clipped)
        feats = self.eval_matrix(nodes.ravel()).reshape(*nodes.shape, self.size)
        out += np.einsum("nq,nqi->ni", weights, feats)
        return out if np.ndim(a) else out[0]

    def gram_matrix(self) -> np.ndarray:
        """``D[i, j] = int f_i f_j``; symmetric, banded, positive semidefinite."""
        return self.gram_cumulative[-1].copy()

    @cached_property
    def gram_cumulative(self) -> np.ndarray:
        """``G[j] = int_lo^breakpoints[j] f f^T``, shape ``(n_breaks, size, size)``."""
        nodes, weights = self._interval_nodes
        feats = self._interval_features
        nq = self.degree + 1
        wf = (weights[:, None] * feats).reshape(-1, nq, self.size)
        ff = feats.reshape(-1, nq, self.size)
        per_interval = np.einsum("bqi,bqj->bij", wf, ff)
        out = np.zeros((len(self.breakpoints), self.size, self.size))
        np.cumsum(per_interval, axis=0, out=out[1:])
        return out

    def partial_gram_matrix(self, a: float) -> np.ndarray:
        """``int_{-inf}^{a} f_i f_j``; equals ``gram_matrix()`` for ``a >= hi``."""
        a = float(np.clip(a, self.lo, self.hi))
        j = min(int(np.searchsorted(self.breakpoints, a, side="right")) - 1,
                len(self.breakpoints) - 2)
        j = max(j, 0)
        nodes, weights = self._map_rule(self.breakpoints[j], a)
        feats = self.eval_matrix(nodes)
        return self.gram_cumulative[j] + (weights[:, None] * feats).T @ feats

    # ------------------------------------------------------------------
    # batched partial forms (the sampler's root search lives on these)

    def _partial_pieces(self, a):
        """Containing interval plus quadrature for the tail [breakpoint, a]."""
        a = np.asarray(a, dtype=float).ravel()
        clipped = np.clip(a, self.lo, self.hi)
        j = np.searchsorted(self.breakpoints, clipped, side="right") - 1
        j = np.clip(j, 0, len(self.breakpoints) - 2)
        nodes, weights = self._map_rule(self.breakpoints[j], clipped)
        return j, nodes, weights

    def linear_prefix_table(self, w: np.ndarray) -> np.ndarray:
        """``int_lo^breakpoint[b] <w, f>`` for every breakpoint (rows follow w)."""
        return np.asarray(w, dtype=float) @ self.integral_cumulative.T

    def partial_linear_forms(self, w, a, prefix_table=None) -> np.ndarray:
        """``int_{-inf}^{a_i} <w_i, f>`` for thresholds ``a``.

        ``w`` is a single length-``size`` weight vector shared by all
        thresholds or one row per threshold.  ``prefix_table`` may carry a
        precomputed ``linear_prefix_table(w)`` when evaluating the same
        weights at many thresholds (bisection loops).
        """
        w = np.asarray(w, dtype=float)
        j, nodes, weights = self._partial_pieces(a)
        n, nq = nodes.shape
        if prefix_table is None:
            prefix_table = self.linear_prefix_table(w)
        prefix = prefix_table[j] if w.ndim == 1 else prefix_table[np.arange(n), j]
        vals, start = self.eval_sparse(nodes.ravel())
        cols = start[:, None] + np.arange(self.degree + 1)
        if w.ndim == 1:
            h = np.sum(w[cols] * vals, axis=1)
        else:
            rows = np.repeat(np.arange(n), nq)
            h = np.sum(w[rows[:, None], cols] * vals, axis=1)
        return prefix + np.sum(weights * h.reshape(n, nq), axis=1)

    def quadratic_prefix_table(self, q: np.ndarray) -> np.ndarray:
        """``int_lo^breakpoint[b] f^T q f`` for every breakpoint."""
        q = np.asarray(q, dtype=float)
        flat = self.gram_cumulative.reshape(len(self.breakpoints), -1).T
        return q.reshape(*q.shape[:-2], -1) @ flat

    def partial_quadratic_forms(self, q, a, prefix_table=None) -> np.ndarray:
        """``int_{-inf}^{a_i} f^T q_i f`` for thresholds ``a``.

        ``q`` is one ``size x size`` matrix shared by all thresholds or a
        stack with one matrix per threshold.
        """
        q = np.asarray(q, dtype=float)
        j, nodes, weights = self._partial_pieces(a)
        n, nq = nodes.shape
        if prefix_table is None:
            prefix_table = self.quadratic_prefix_table(q)
        prefix = prefix_table[j] if q.ndim == 2 else prefix_table[np.arange(n), j]
        vals, start = self.eval_sparse(nodes.ravel())
        idx = start[:, None] + np.arange(self.degree + 1)
        if q.ndim == 2:
            sub = q[idx[:, :, None], idx[:, None, :]]
        else:
            rows = np.repeat(np.arange(n), nq)
            sub = q[rows[:, None, None], idx[:, :, None], idx[:, None, :]]
        h = np.einsum("xab,xa,xb->x", sub, vals, vals)
        return prefix + np.sum(weights * h.reshape(n, nq), axis=1)


def basis_for_bounds(bounds: np.ndarray, size: int, degree: int = 2) -> list[BSplineBasis]:
    """One basis per dimension from a ``(d, 2)`` array of domain bounds."""
    return [BSplineBasis(size, lo, hi, degree=degree) for lo, hi in np.asarray(bounds, dtype=float)]
