"""Tensor-train container and core algebra.

A d-dimensional tensor is stored as a chain of order-3 cores
``G_k`` of shape ``(r_{k-1}, m_k, r_k)`` with ``r_0 = r_d = 1``; entry
``(i_1, ..., i_d)`` is the product of matrix slices
``G_1[:, i_1, :] @ ... @ G_d[:, i_d, :]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSE_LIMIT = 10**7  # dense materialization is a testing device, keep it bounded


class TTTensor:
    """Immutable tensor-train value: a validated chain of order-3 cores."""

    __slots__ = ("cores",)

    def __init__(self, cores):
        cores = tuple(np.asarray(c, dtype=float) for c in cores)
        if not cores:
            raise ValueError("need at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {k} has ndim {c.ndim}, expected 3")
            if k and cores[k - 1].shape[2] != c.shape[0]:
                raise ValueError(f"rank mismatch between cores {k - 1} and {k}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        self.cores = cores

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    def dense(self, limit: int = DENSE_LIMIT) -> np.ndarray:
        """Materialize the full tensor (testing oracle; size-gated)."""
        total = int(np.prod(self.mode_sizes, dtype=np.int64))
        if total > limit:
            raise ValueError(f"dense tensor would have {total} entries (limit {limit})")
        out = self.cores[0].reshape(self.mode_sizes[0], -1)
        for core in self.cores[1:]:
            r = core.shape[0]
            out = out.reshape(-1, r) @ core.reshape(r, -1)
        return out.reshape(self.mode_sizes)

    def norm(self) -> float:
        """Frobenius norm, computed stably from the orthogonalized form."""
        return float(np.linalg.norm(orthogonalize(self).center[-1]))

    def scale(self, c: float) -> "TTTensor":
        return TTTensor(self.cores[:-1] + (self.cores[-1] * float(c),))

    def __repr__(self):
        return f"TTTensor(d={self.d}, modes={self.mode_sizes}, ranks={self.ranks})"


def rank1_from_vectors(vectors) -> TTTensor:
    """TT tensor (all ranks 1) whose dense form is the outer product of the vectors."""
    vectors = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not vectors:
        raise ValueError("need at least one vector")
    return TTTensor([v.reshape(1, -1, 1) for v in vectors])


def inner_product(t1: TTTensor, t2: TTTensor) -> float:
    """Inner product of two TT tensors by left-to-right environment accumulation."""
    if t1.mode_sizes != t2.mode_sizes:
        raise ValueError(f"mode sizes differ: {t1.mode_sizes} vs {t2.mode_sizes}")
    env = np.ones((1, 1))
    for a, b in zip(t1.cores, t2.cores):
        env = np.einsum("ix,inj,xny->jy", env, a, b, optimize=True)
    return float(env[0, 0])


def contract_rank1(t: TTTensor, vectors) -> float:
    """``<T, v_1 x ... x v_d>`` in O(d m r^2) without forming the rank-1 tensor."""
    vectors = list(vectors)
    if len(vectors) != t.d:
        raise ValueError(f"got {len(vectors)} vectors for a {t.d}-dimensional tensor")
    env = np.ones(1)
    for core, v in zip(t.cores, vectors):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != core.shape[1]:
            raise ValueError(f"vector length {v.size} != mode size {core.shape[1]}")
        env = env @ np.einsum("anb,n->ab", core, v)
    return float(env[0])


def apply_gram_operator(t: TTTensor, grams) -> TTTensor:
    """Multiply each core along its middle axis by the matching matrix."""
    grams = list(grams)
    if len(grams) != t.d:
        raise ValueError("need one matrix per dimension")
    cores = []
    for core, g in zip(t.cores, grams):
        g = np.asarray(g, dtype=float)
        if g.shape != (core.shape[1], core.shape[1]):
            raise ValueError(f"matrix shape {g.shape} does not match mode size {core.shape[1]}")
        cores.append(np.einsum("nm,amb->anb", g, core))
    return TTTensor(cores)


def tt_sum(t1: TTTensor, t2: TTTensor) -> TTTensor:
    """Exact sum; ranks add (boundary cores concatenate, inner cores block-diag)."""
    if t1.mode_sizes != t2.mode_sizes:
        raise ValueError("mode sizes differ")
    if t1.d == 1:
        return TTTensor([t1.cores[0] + t2.cores[0]])
    cores = [np.concatenate([t1.cores[0], t2.cores[0]], axis=2)]
    for a, b in zip(t1.cores[1:-1], t2.cores[1:-1]):
        ra, m, ca = a.shape
        rb, _, cb = b.shape
        block = np.zeros((ra + rb, m, ca + cb))
        block[:ra, :, :ca] = a
        block[ra:, :, ca:] = b
        cores.append(block)
    cores.append(np.concatenate([t1.cores[-1], t2.cores[-1]], axis=0))
    return TTTensor(cores)


@dataclass(frozen=True)
class Orthogonalization:
    """Left/right orthogonal frames of a TT tensor plus all center cores.

    For every position ``i``, ``U_1 ... U_{i-1} S_i V_{i+1} ... V_d``
    reconstructs the original tensor; columns of reshaped ``U_k`` and rows
    of reshaped ``V_k`` are orthonormal.
    """

    left: tuple
    right: tuple
    center: tuple

    @property
    def d(self) -> int:
        return len(self.left)

    def left_ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.left)

    def right_ranks(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.right) + (1,)


def orthogonalize(t: TTTensor) -> Orthogonalization:
    """QR sweeps from both ends; centers absorb both triangular factors."""
    d = t.d
    # left-to-right: G_1 ... G_k = U_1 ... U_k L_k
    left, l_factors = [], [np.ones((1, 1))]
    carry = np.ones((1, 1))
    for core in t.cores:
        b = np.einsum("ab,bnc->anc", carry, core)
        r0, m, r1 = b.shape
        q, carry = np.linalg.qr(b.reshape(r0 * m, r1))
        left.append(q.reshape(r0, m, -1))
        l_factors.append(carry)
    # right-to-left: G_k ... G_d = R_{k-1} V_k ... V_d
    right, r_factors = [None] * d, [None] * (d + 1)
    r_factors[d] = np.ones((1, 1))
    carry = np.ones((1, 1))
    for k in range(d - 1, -1, -1):
        b = np.einsum("anb,bc->anc", t.cores[k], carry)
        r0, m, r1 = b.shape
        # LQ via QR of the transpose
        q, rt = np.linalg.qr(b.reshape(r0, m * r1).T)
        right[k] = q.T.reshape(-1, m, r1)
        carry = rt.T
        r_factors[k] = carry
    center = [np.einsum("ab,bnc,cd->and", l_factors[i], t.cores[i], r_factors[i + 1])
              for i in range(d)]
    return Orthogonalization(tuple(left), tuple(right), tuple(center))


def tt_round(t: TTTensor, max_rank: int) -> TTTensor:
    """Truncate TT ranks to ``max_rank`` by an SVD sweep (quasi-optimal).

    Right-orthogonalizes first, then truncates left-to-right.  With ranks
    already within the cap this is exact up to re-gauging.
    """
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    d = t.d
    if d == 1:
        return TTTensor([c.copy() for c in t.cores])
    # right-orthogonalize: cores[0] unrestricted, cores[1:] row-orthonormal
    cores = [c for c in t.cores]
    for k in range(d - 1, 0, -1):
        r0, m, r1 = cores[k].shape
        q, rt = np.linalg.qr(cores[k].reshape(r0, m * r1).T)
        cores[k] = q.T.reshape(-1, m, r1)
        cores[k - 1] = np.einsum("anb,bc->anc", cores[k - 1], rt.T)
    # truncation sweep
    for k in range(d - 1):
        r0, m, r1 = cores[k].shape
        u, s, vt = np.linalg.svd(cores[k].reshape(r0 * m, r1), full_matrices=False)
        keep = min(max_rank, s.size)
        cores[k] = u[:, :keep].reshape(r0, m, keep)
        carry = s[:keep, None] * vt[:keep]
        cores[k + 1] = np.einsum("ab,bnc->anc", carry, cores[k + 1])
    return TTTensor(cores)
