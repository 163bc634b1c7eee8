"""Supervised aligners: orthogonal Procrustes and RCSLS by stochastic gradient descent."""

import logging

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .errors import DimensionMismatchError, DivergenceError
from .linalg import clip_spectrum, top_k_indices
from .models import (
    EmbeddingSpace,
    Lexicon,
    LinearMap,
    SupConfig,
    SupMethod,
)

logger = logging.getLogger(__name__)


def procrustes(source: np.ndarray, target: np.ndarray) -> LinearMap:
    """Orthogonal Q minimizing ``sum ||source_i Q - target_i||^2``.

    Rank-deficient cross-covariances still yield a valid minimizer, flagged
    through ``LinearMap.rank_deficient``.
    """
    if source.shape != target.shape or source.ndim != 2:
        raise DimensionMismatchError(
            f"parallel rows must share a shape, got {source.shape} and {target.shape}"
        )
    if source.shape[0] < 1:
        raise ValueError("procrustes needs at least one parallel row")

    rank = np.linalg.matrix_rank(source.T @ target)
    deficient = bool(rank < source.shape[1])
    if deficient:
        logger.warning(
            "Procrustes cross-covariance has rank %d < %d; minimizer is not unique",
            rank,
            source.shape[1],
        )
    q, _ = orthogonal_procrustes(source, target)
    return LinearMap(matrix=q, orthogonal=True, rank_deficient=deficient)


def procrustes_residual(q: LinearMap, source: np.ndarray, target: np.ndarray) -> float:
    """``sum ||source_i Q - target_i||^2``."""
    return float(np.sum((q.apply(source) - target) ** 2))


def _rcsls_terms(
    q: np.ndarray,
    source: np.ndarray,
    target: np.ndarray,
    x_pool: np.ndarray,
    y_pool: np.ndarray,
    k: int,
) -> tuple[float, np.ndarray]:
    limit = min(x_pool.shape[0], y_pool.shape[0])
    if not 1 <= k <= limit:
        raise ValueError(f"k={k} out of range [1, {limit}]")
    batch = source.shape[0]

    mapped = source @ q
    y_bar = y_pool[top_k_indices(mapped @ y_pool.T, k)].mean(axis=1)
    x_bar = x_pool[top_k_indices(target @ (x_pool @ q).T, k)].mean(axis=1)

    loss = (
        -2.0 * np.sum(mapped * target)
        + np.sum(mapped * y_bar)
        + np.sum((x_bar @ q) * target)
    ) / batch
    grad = (-2.0 * source.T @ target + source.T @ y_bar + x_bar.T @ target) / batch
    return float(loss), grad


def rcsls_loss_and_grad(
    q: LinearMap,
    source: np.ndarray,
    target: np.ndarray,
    x_pool: np.ndarray,
    y_pool: np.ndarray,
    k: int,
) -> tuple[float, np.ndarray]:
    """Batch-mean RCSLS loss and its gradient with the neighbour sets held fixed.

    For a pair ``(s, t)`` the loss is ``-2 (sQ)·t`` plus the mean similarity of
    ``sQ`` to its ``k`` nearest rows of ``y_pool`` plus the mean similarity of
    ``t`` to its ``k`` nearest mapped rows of ``x_pool``.
    """
    if source.shape != target.shape:
        raise DimensionMismatchError(
            f"batch shapes differ: {source.shape} and {target.shape}"
        )
    return _rcsls_terms(q.matrix, source, target, x_pool, y_pool, k)


class SupervisedAligner:
    """Fits a supervised map on a lexicon, one epoch per :meth:`fit` call."""

    def __init__(self, src: EmbeddingSpace, tgt: EmbeddingSpace, cfg: SupConfig):
        if src.dim != tgt.dim:
            raise DimensionMismatchError(
                f"source d={src.dim} and target d={tgt.dim} differ"
            )
        self.src = src
        self.tgt = tgt
        self.cfg = cfg
        self.x_pool = src.top(cfg.neighbor_pool)
        self.y_pool = tgt.top(cfg.neighbor_pool)
        self.history: list[float] = []

    @property
    def last_loss(self) -> float | None:
        return self.history[-1] if self.history else None

    def fit(
        self, lexicon: Lexicon, init: LinearMap, seed: int | None = None
    ) -> LinearMap:
        """Train from ``init`` on ``lexicon`` and return the new map."""
        if not len(lexicon):
            raise ValueError("supervised training needs a nonempty lexicon")
        lexicon.check_bounds(self.src.size, self.tgt.size)
        source = self.src.matrix[lexicon.src_indices]
        target = self.tgt.matrix[lexicon.tgt_indices]

        if self.cfg.method is SupMethod.PROCRUSTES:
            q = procrustes(source, target)
            self.history.append(procrustes_residual(q, source, target) / len(lexicon))
            return q

        rng = np.random.default_rng(self.cfg.seed if seed is None else seed)
        matrix = np.array(init.matrix)
        losses = []
        for _ in range(self.cfg.iters_per_epoch):
            batch = rng.integers(0, len(lexicon), size=self.cfg.batch_size)
            loss, grad = _rcsls_terms(
                matrix,
                source[batch],
                target[batch],
                self.x_pool,
                self.y_pool,
                self.cfg.k,
            )
            losses.append(loss)
            if self.cfg.learning_rate == 0:
                continue
            matrix = matrix - self.cfg.learning_rate * grad
            if self.cfg.spectral_clip:
                matrix = clip_spectrum(matrix)
            if not np.isfinite(matrix).all():
                raise DivergenceError("RCSLS step produced a non-finite map")

        if losses:
            self.history.append(float(np.mean(losses)))
            logger.debug("RCSLS epoch mean loss %.6f", self.history[-1])
        return LinearMap(matrix=matrix)


def train_supervised(
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    lexicon: Lexicon,
    init: LinearMap,
    cfg: SupConfig,
    seed: int | None = None,
) -> LinearMap:
    """One epoch of supervised training; see :class:`SupervisedAligner`."""
    return SupervisedAligner(src, tgt, cfg).fit(lexicon, init, seed=seed)
