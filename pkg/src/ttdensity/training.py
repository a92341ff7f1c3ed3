"""Training: quadratic loss, Riemannian steps with exact line search, and an
Adam-on-cores baseline.

The plain variant minimizes the sample estimate of the squared L2 distance
to the data density,

    loss(alpha) = <alpha, D alpha> - (2/b) sum_i <alpha, Phi(x_i)>,

whose gradient is an explicit low-rank-plus-rank-1-batch tensor.  One
Riemannian step orthogonalizes the current point, projects that gradient
onto the tangent space of the fixed-rank manifold, moves by the exact
minimizer of the loss parabola along the projected direction, and retracts
by rank truncation.  The squared variant trains by maximum likelihood with
Adam updates applied directly to core entries.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .basis import basis_for_bounds
from .density import LOG_FLOOR, DensityModel, batch_contract
from .initialization import rank1_init, random_init
from .tt import (Orthogonalization, TTTensor, apply_gram_operator, inner_product,
                 orthogonalize, tt_round)

logger = logging.getLogger(__name__)

OPTIMIZERS = ("riemannian", "adam")
INITS = ("rank1", "random")
STEP_DENOM_FLOOR = 1e-14


# ----------------------------------------------------------------------
# losses and euclidean gradients


def l2_loss(model: DensityModel, batch: np.ndarray) -> float:
    """Quadratic loss of the unnormalized plain model on a sample batch."""
    return _l2_loss(model.alpha, model.grams(), model.feature_matrices(batch))


def _l2_loss(alpha, grams, feats) -> float:
    quad = inner_product(alpha, apply_gram_operator(alpha, grams))
    return quad - 2.0 * float(batch_contract(alpha, feats).mean())


def nll_loss(model: DensityModel, batch: np.ndarray) -> float:
    """Mean negative log-likelihood of the squared model (self-normalizing)."""
    value, n_floored = _nll_loss(model.alpha, model.grams(), model.feature_matrices(batch))
    if n_floored:
        logger.warning("nll_loss: %d samples with zero amplitude floored at %g",
                       n_floored, LOG_FLOOR)
    return value


def _nll_loss(alpha, grams, feats):
    s = batch_contract(alpha, feats)
    z = inner_product(alpha, apply_gram_operator(alpha, grams))
    if not z > 0:
        return float("inf"), 0
    zero = s == 0.0
    with np.errstate(divide="ignore"):
        logs = np.where(zero, LOG_FLOOR, 2.0 * np.log(np.abs(np.where(zero, 1.0, s))))
    return float(np.log(z) - logs.mean()), int(np.count_nonzero(zero))


@dataclass
class StructuredGradient:
    """Euclidean gradient kept in the form the projection can exploit:
    a few TT tensors plus batches of rank-1 feature tensors."""

    mode_sizes: tuple[int, ...]
    tt_terms: list[tuple[float, TTTensor]] = field(default_factory=list)
    feature_terms: list[tuple[float, list[np.ndarray]]] = field(default_factory=list)

    def dense(self) -> np.ndarray:
        """Materialized gradient (testing oracle; small sizes only)."""
        out = np.zeros(self.mode_sizes)
        for coef, t in self.tt_terms:
            out += coef * t.dense()
        for coef, feats in self.feature_terms:
            for s in range(len(feats[0])):
                term = feats[0][s]
                for fk in feats[1:]:
                    term = np.multiply.outer(term, fk[s])
                out += coef * term
        return out


def l2_gradient(model: DensityModel, batch: np.ndarray) -> StructuredGradient:
    """``grad = 2 D alpha - (2/b) sum_i Phi(x_i)`` in structured form."""
    return _l2_gradient(model.alpha, model.grams(), model.feature_matrices(batch))


def _l2_gradient(alpha, grams, feats) -> StructuredGradient:
    b = len(feats[0])
    return StructuredGradient(
        mode_sizes=alpha.mode_sizes,
        tt_terms=[(2.0, apply_gram_operator(alpha, grams))],
        feature_terms=[(-2.0 / b, feats)],
    )


# ----------------------------------------------------------------------
# tangent space of the fixed-rank manifold


@dataclass
class TangentVector:
    """Delta-cores against the orthogonal frames of the base point.

    All but the last delta-core satisfy the gauge condition (columns
    orthogonal to the matching left frame), which makes the parametrization
    injective and the per-position terms mutually orthogonal.
    """

    frames: Orthogonalization
    deltas: list[np.ndarray]

    def norm(self) -> float:
        # gauge + orthonormal frames make the embedded terms orthogonal
        return float(np.sqrt(sum(np.sum(s * s) for s in self.deltas)))

    def embed(self, scale: float = 1.0, with_base: bool = False) -> TTTensor:
        """The tangent tensor (optionally plus the base point) as a TT of
        ranks at most doubled: per position the cores stack the right frame,
        the scaled delta, and the left frame in a 2x2 block pattern."""
        u, v, center = self.frames.left, self.frames.right, self.frames.center
        d = self.frames.d
        if d == 1:
            core = scale * self.deltas[0] + (center[0] if with_base else 0.0)
            return TTTensor([core])
        cores = [np.concatenate([scale * self.deltas[0], u[0]], axis=2)]
        for k in range(1, d - 1):
            qr_, m, qc = v[k].shape
            lr, _, lc = u[k].shape
            block = np.zeros((qr_ + lr, m, qc + lc))
            block[:qr_, :, :qc] = v[k]
            block[qr_:, :, :qc] = scale * self.deltas[k]
            block[qr_:, :, qc:] = u[k]
            cores.append(block)
        last = scale * self.deltas[-1] + (center[-1] if with_base else 0.0)
        cores.append(np.concatenate([v[-1], last], axis=0))
        return TTTensor(cores)


def project_to_tangent(frames: Orthogonalization, grad: StructuredGradient) -> TangentVector:
    """Orthogonal projection of an explicit tensor onto the tangent space.

    The gradient's structure (TT terms, batched rank-1 terms) lets every
    delta-core come out of closed-form environment contractions against the
    left/right frames; the gauge projection removes the left-frame column
    space from all but the last position.
    """
    d = frames.d
    u, v = frames.left, frames.right
    deltas = [np.zeros((u[i].shape[0], u[i].shape[1], v[i].shape[2])) for i in range(d)]
    for coef, t in grad.tt_terms:
        _accumulate_tt(u, v, t, coef, deltas)
    for coef, feats in grad.feature_terms:
        _accumulate_features(u, v, feats, coef, deltas)
    for i in range(d - 1):
        r0, m, r1 = u[i].shape
        uu = u[i].reshape(r0 * m, r1)
        w = deltas[i].reshape(r0 * m, -1)
        deltas[i] = (w - uu @ (uu.T @ w)).reshape(deltas[i].shape)
    return TangentVector(frames, deltas)


def _accumulate_tt(u, v, t, coef, deltas):
    d = len(u)
    a = [np.ones((1, 1))]
    for k in range(d - 1):
        a.append(np.einsum("anb,ac,cnd->bd", u[k], a[k], t.cores[k], optimize=True))
    b = [None] * (d + 1)
    b[d] = np.ones((1, 1))
    for k in range(d - 1, 0, -1):
        b[k] = np.einsum("cnd,anb,db->ca", t.cores[k], v[k], b[k + 1], optimize=True)
    for i in range(d):
        deltas[i] += coef * np.einsum("ac,cnd,db->anb", a[i], t.cores[i], b[i + 1],
                                      optimize=True)


def _accumulate_features(u, v, feats, coef, deltas):
    d = len(u)
    n = len(feats[0])
    left = [np.ones((n, 1))]
    for k in range(d - 1):
        left.append(np.einsum("sa,anj,sn->sj", left[k], u[k], feats[k], optimize=True))
    right = [None] * (d + 1)
    right[d] = np.ones((n, 1))
    for k in range(d - 1, 0, -1):
        right[k] = np.einsum("sb,cnb,sn->sc", right[k + 1], v[k], feats[k], optimize=True)
    for i in range(d):
        deltas[i] += coef * np.einsum("sa,sn,sb->anb", left[i], feats[i], right[i + 1],
                                      optimize=True)


# ----------------------------------------------------------------------
# Riemannian optimizer


def optimal_step(model: DensityModel, direction: TangentVector, batch: np.ndarray) -> float:
    """Exact minimizer of the quadratic loss along an embedded direction."""
    return _optimal_step(model.alpha, direction.embed(), model.grams(),
                         model.feature_matrices(batch))


def _optimal_step(alpha, direction_tt, grams, feats) -> float:
    den = inner_product(direction_tt, apply_gram_operator(direction_tt, grams))
    if den <= STEP_DENOM_FLOOR:
        return 0.0
    num = (inner_product(direction_tt, apply_gram_operator(alpha, grams))
           - float(batch_contract(direction_tt, feats).mean()))
    return -num / den


def riemannian_step(model: DensityModel, batch: np.ndarray, rank: int) -> DensityModel:
    """One project / exact-step / retract cycle on the quadratic loss."""
    if model.variant != "plain":
        raise ValueError("Riemannian steps target the plain variant's quadratic loss")
    alpha = _riemannian_step(model.alpha, model.grams(), model.feature_matrices(batch), rank)
    return DensityModel(alpha, model.bases, model.variant, model.z)


def _riemannian_step(alpha, grams, feats, rank) -> TTTensor:
    frames = orthogonalize(alpha)
    grad = _l2_gradient(alpha, grams, feats)
    tangent = project_to_tangent(frames, grad)
    if tangent.norm() == 0.0:
        return alpha
    t = _optimal_step(alpha, tangent.embed(), grams, feats)
    if t == 0.0:
        return alpha
    return tt_round(tangent.embed(scale=t, with_base=True), rank)


# ----------------------------------------------------------------------
# Adam-on-cores baseline


def l2_core_gradient(alpha: TTTensor, grams, feats) -> list[np.ndarray]:
    """Gradient of the quadratic loss w.r.t. every core entry."""
    quad = _quadratic_core_terms(alpha, grams)
    lin = _feature_core_terms(alpha, feats)
    b = len(feats[0])
    return [2.0 * q - (2.0 / b) * l for q, l in zip(quad, lin)]


def nll_core_gradient(alpha: TTTensor, grams, feats) -> list[np.ndarray]:
    """Gradient of the squared-variant NLL w.r.t. every core entry."""
    s = batch_contract(alpha, feats)
    z = inner_product(alpha, apply_gram_operator(alpha, grams))
    zero = s == 0.0
    if np.any(zero):
        logger.warning("nll gradient: %d zero amplitudes dropped", int(zero.sum()))
    weights = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, s))
    quad = _quadratic_core_terms(alpha, grams)
    lin = _feature_core_terms(alpha, feats, weights)
    b = len(feats[0])
    return [(2.0 / z) * q - (2.0 / b) * l for q, l in zip(quad, lin)]


def _quadratic_core_terms(alpha, grams):
    """Per-core derivative of ``<alpha, D alpha>`` divided by 2."""
    d = alpha.d
    ga = apply_gram_operator(alpha, grams)
    el = [np.ones((1, 1))]
    for k in range(d - 1):
        el.append(np.einsum("aA,anb,AnB->bB", el[k], alpha.cores[k], ga.cores[k],
                            optimize=True))
    er = [None] * (d + 1)
    er[d] = np.ones((1, 1))
    for k in range(d - 1, 0, -1):
        er[k] = np.einsum("anb,AnB,bB->aA", alpha.cores[k], ga.cores[k], er[k + 1],
                          optimize=True)
    return [np.einsum("aA,AnB,bB->anb", el[k], ga.cores[k], er[k + 1], optimize=True)
            for k in range(d)]


def _feature_core_terms(alpha, feats, weights=None):
    """Per-core derivative of ``sum_s w_s <alpha, Phi(x_s)>``."""
    d = alpha.d
    n = len(feats[0])
    left = [np.ones((n, 1))]
    for k in range(d - 1):
        left.append(np.einsum("sa,anb,sn->sb", left[k], alpha.cores[k], feats[k],
                              optimize=True))
    right = [None] * (d + 1)
    right[d] = np.ones((n, 1))
    for k in range(d - 1, 0, -1):
        right[k] = np.einsum("sb,anb,sn->sa", right[k + 1], alpha.cores[k], feats[k],
                             optimize=True)
    out = []
    for k in range(d):
        lk = left[k] if weights is None else weights[:, None] * left[k]
        out.append(np.einsum("sa,sn,sb->anb", lk, feats[k], right[k + 1], optimize=True))
    return out


class AdamState:
    """First/second moment accumulators for per-core updates."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def updates(self, grads, lr):
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        out = []
        for k, g in enumerate(grads):
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            mhat = self.m[k] / (1 - self.beta1 ** self.t)
            vhat = self.v[k] / (1 - self.beta2 ** self.t)
            out.append(-lr * mhat / (np.sqrt(vhat) + self.eps))
        return out


def core_adam_step(alpha: TTTensor, grads, state: AdamState, lr: float) -> TTTensor:
    """Apply one moment-adaptive update directly to core entries."""
    return TTTensor([c + u for c, u in zip(alpha.cores, state.updates(grads, lr))])


# ----------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    variant: str = "plain"
    rank: int = 8
    basis_size: int = 32
    degree: int = 2
    optimizer: str = "riemannian"
    init: str = "rank1"
    batch_size: int = 1024
    iters: int = 500
    lr: float = 1e-2  # adam only
    seed: int = 0
    eval_every: int = 0  # 0: once per epoch
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def validate(self):
        if self.variant not in ("plain", "squared"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.variant == "squared" and self.optimizer == "riemannian":
            raise ValueError("the exact line search needs the quadratic loss; "
                             "train the squared variant with adam")
        if self.rank < 1 or self.basis_size < self.degree + 1 or self.batch_size < 1:
            raise ValueError("rank, basis size and batch size must be positive "
                             "(basis size at least degree + 1)")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")


@dataclass
class LogRow:
    iteration: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainResult:
    model: DensityModel
    log: list[LogRow]
    best_iteration: int
    best_val_loss: float


def train(config: TrainConfig, data) -> TrainResult:
    """Fit a density model to a dataset and return the best-validation model.

    Iterates minibatch steps of the configured optimizer, evaluating the
    validation loss every ``eval_every`` iterations (default: once per
    epoch); the returned model is the best-validation iterate, normalized.
    """
    config.validate()
    bases = basis_for_bounds(data.bounds, config.basis_size, config.degree)
    grams = [b.gram_matrix() for b in bases]
    x_train, x_val = data.train, data.val
    if len(x_train) == 0:
        raise ValueError("empty training set")

    if config.init == "rank1":
        alpha = rank1_init(x_train, bases, variant=config.variant)
        if config.optimizer == "adam":
            # Adam updates keep core shapes fixed, so the rank-1 start must be
            # embedded into rank-r cores; tiny noise gives the extra entries
            # gradient signal (the Riemannian retraction grows ranks by itself)
            alpha = _pad_ranks(alpha, config.rank, np.random.default_rng([config.seed, 0xAD]))
    else:
        alpha = random_init(len(bases), config.basis_size, config.rank, config.seed)

    val_feats = [b.eval_matrix(x_val[:, k]) for k, b in enumerate(bases)] if len(x_val) else None
    rng = np.random.default_rng(config.seed)
    eval_every = config.eval_every or max(1, len(x_train) // config.batch_size)
    adam = AdamState()
    log: list[LogRow] = []
    best = (np.inf, 0, alpha)
    order = np.array([], dtype=int)
    start = time.perf_counter()

    for it in range(1, config.iters + 1):
        if len(order) < config.batch_size:
            order = np.concatenate([order, rng.permutation(len(x_train))])
        batch_idx, order = order[:config.batch_size], order[config.batch_size:]
        batch = x_train[batch_idx]
        feats = [b.eval_matrix(batch[:, k]) for k, b in enumerate(bases)]

        if config.optimizer == "riemannian":
            alpha = _riemannian_step(alpha, grams, feats, config.rank)
            train_loss = _l2_loss(alpha, grams, feats)
        else:
            if config.variant == "plain":
                grads = l2_core_gradient(alpha, grams, feats)
            else:
                grads = nll_core_gradient(alpha, grams, feats)
            alpha = core_adam_step(alpha, grads, adam, config.lr)
            if config.variant == "plain":
                train_loss = _l2_loss(alpha, grams, feats)
            else:
                train_loss, _ = _nll_loss(alpha, grams, feats)

        if not np.isfinite(train_loss):
            raise RuntimeError(f"non-finite training loss {train_loss} at iteration {it}; "
                               f"ranks={alpha.ranks}, lr={config.lr}")

        if it % eval_every == 0 or it == config.iters:
            val_loss = _validation_loss(alpha, grams, val_feats, config.variant, train_loss)
            log.append(LogRow(it, train_loss, val_loss, time.perf_counter() - start))
            if val_loss < best[0]:
                best = (val_loss, it, alpha)
        if config.checkpoint_every and config.checkpoint_path \
                and it % config.checkpoint_every == 0:
            _checkpoint(alpha, bases, config, it)

    model = DensityModel(best[2], tuple(bases), config.variant).normalize()
    return TrainResult(model=model, log=log, best_iteration=best[1], best_val_loss=best[0])


def _pad_ranks(alpha: TTTensor, rank: int, rng) -> TTTensor:
    d = alpha.d
    if d == 1:
        return alpha
    cores = []
    for k, core in enumerate(alpha.cores):
        r0, m, r1 = core.shape
        t0 = r0 if k == 0 else rank
        t1 = r1 if k == d - 1 else rank
        scale = 1e-2 * max(np.sqrt(np.mean(core**2)), 1e-12)
        padded = rng.normal(scale=scale, size=(t0, m, t1))
        padded[:r0, :, :r1] = core
        cores.append(padded)
    return TTTensor(cores)


def _validation_loss(alpha, grams, val_feats, variant, fallback):
    if val_feats is None:
        return fallback
    if variant == "plain":
        return _l2_loss(alpha, grams, val_feats)
    return _nll_loss(alpha, grams, val_feats)[0]


def _checkpoint(alpha, bases, config, it):
    model = DensityModel(alpha, tuple(bases), config.variant)
    try:
        model = model.normalize()
    except Exception:
        logger.warning("checkpoint at iteration %d saved unnormalized", it)
    model.save(config.checkpoint_path)
