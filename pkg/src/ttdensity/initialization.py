"""Starting points for training: per-dimension rank-1 fits and random cores."""

from __future__ import annotations

import logging

import numpy as np

from .basis import BSplineBasis
from .tt import TTTensor, rank1_from_vectors

logger = logging.getLogger(__name__)

RIDGE = 1e-10


def rank1_init(data, bases: list[BSplineBasis], variant: str = "plain") -> TTTensor:
    """Rank-1 tensor from independent per-dimension least-squares density fits.

    Dimension ``k`` gets the minimizer of the 1D quadratic loss
    ``int <a, f>^2 - 2 E <a, f(x_k)>``, i.e. ``a_k = D^{-1} mean f(x_k)``.
    For the squared variant the fitted 1D density is re-projected onto the
    basis through a square root, so that the squared model starts near the
    product of the marginals rather than their squares.
    """
    x = data.train if hasattr(data, "train") else np.asarray(data, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("need a nonempty (n, d) sample matrix")
    if x.shape[1] != len(bases):
        raise ValueError("one basis per data dimension required")
    vectors = []
    for k, basis in enumerate(bases):
        target = basis.eval_matrix(x[:, k]).mean(axis=0)
        coeff = _solve_gram(basis.gram_matrix(), target, k)
        if variant == "squared":
            coeff = _sqrt_reproject(basis, coeff, k)
        vectors.append(coeff)
    return rank1_from_vectors(vectors)


def random_init(d: int, m: int, r: int, seed: int = 0) -> TTTensor:
    """Independent zero-mean cores scaled so the tensor norm is O(1)."""
    rng = np.random.default_rng(seed)
    ranks = [1] + [r] * (d - 1) + [1]
    scale = 1.0 / np.sqrt(r * m)
    return TTTensor([rng.normal(scale=scale, size=(ranks[k], m, ranks[k + 1]))
                     for k in range(d)])


def _solve_gram(gram: np.ndarray, rhs: np.ndarray, dim: int) -> np.ndarray:
    try:
        coeff = np.linalg.solve(gram, rhs)
        if np.all(np.isfinite(coeff)):
            return coeff
    except np.linalg.LinAlgError:
        pass
    logger.warning("dimension %d: singular Gram matrix, solving with ridge %g", dim, RIDGE)
    return np.linalg.solve(gram + RIDGE * np.eye(len(gram)), rhs)


def _sqrt_reproject(basis: BSplineBasis, coeff: np.ndarray, dim: int) -> np.ndarray:
    # L2-project sqrt(max(fitted density, 0)) back onto the basis; the
    # integrand is no longer polynomial, so use a denser quadrature rule
    xi, w = np.polynomial.legendre.leggauss(8)
    lo, hi = basis.breakpoints[:-1], basis.breakpoints[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (lo + hi)[:, None] + half[:, None] * xi).ravel()
    weights = (half[:, None] * w).ravel()
    feats = basis.eval_matrix(nodes)
    root = np.sqrt(np.clip(feats @ coeff, 0.0, None))
    return _solve_gram(basis.gram_matrix(), feats.T @ (weights * root), dim)
