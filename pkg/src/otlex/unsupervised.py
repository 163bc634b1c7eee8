"""Stochastic Wasserstein-Procrustes alignment with an optional transport prior."""

import logging

import numpy as np
from pydantic import ValidationError

from .errors import DimensionMismatchError, DivergenceError
from .linalg import orthogonalize, top_k_indices
from .models import (
    CostMatrix,
    EmbeddingSpace,
    GradientForm,
    LinearMap,
    PriorPlan,
    TransportCost,
    TransportPlan,
    UnsupConfig,
)
from .ot_core import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    boltzmann_prior,
    cost_rcsls,
    cost_sq_euclidean,
    prior_ot,
    sinkhorn,
)

logger = logging.getLogger(__name__)


def sample_indices(size: int, cfg: UnsupConfig, rng: np.random.Generator) -> np.ndarray:
    """``batch_size`` distinct indices among the first ``sample_pool`` of ``size`` rows."""
    pool = min(cfg.sample_pool, size)
    if cfg.batch_size > pool:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds sampling pool {pool}")
    return rng.choice(pool, size=cfg.batch_size, replace=False)


def sample_batch(
    space: EmbeddingSpace, cfg: UnsupConfig, rng: np.random.Generator
) -> np.ndarray:
    """Rows of a uniform sample without replacement from the top of ``space``."""
    return space.matrix[sample_indices(space.size, cfg, rng)]


def transport_costs(
    q: LinearMap, xb: np.ndarray, yb: np.ndarray, cfg: UnsupConfig
) -> CostMatrix:
    if xb.shape != yb.shape:
        raise DimensionMismatchError(f"batch shapes differ: {xb.shape} and {yb.shape}")
    if cfg.transport_cost is TransportCost.RCSLS:
        return cost_rcsls(xb, yb, q, cfg.prior_k)
    return cost_sq_euclidean(q.apply(xb), yb)


def solve_plan(
    costs: CostMatrix, prior: PriorPlan | None, cfg: UnsupConfig
) -> TransportPlan:
    """Prior OT when a prior is given and enabled, plain entropic OT otherwise."""
    if prior is not None and cfg.use_pot:
        return prior_ot(
            costs,
            prior,
            cfg.varepsilon,
            max_iters=cfg.sinkhorn_iters,
            tol=cfg.sinkhorn_tol,
        )
    return sinkhorn(
        costs, cfg.epsilon, max_iters=cfg.sinkhorn_iters, tol=cfg.sinkhorn_tol
    )


def transport_gradient(
    q: LinearMap,
    xb: np.ndarray,
    yb: np.ndarray,
    plan: np.ndarray,
    cfg: UnsupConfig,
) -> np.ndarray:
    """Gradient of ``<D(Q), P>`` in Q with the plan (and neighbour sets) held fixed."""
    if cfg.transport_cost is TransportCost.RCSLS:
        mapped = q.apply(xb)
        y_bar = yb[top_k_indices(mapped @ yb.T, cfg.prior_k)].mean(axis=1)
        x_bar = xb[top_k_indices(yb @ mapped.T, cfg.prior_k)].mean(axis=1)
        return (
            -2.0 * xb.T @ (plan @ yb)
            + xb.T @ (plan.sum(axis=1)[:, None] * y_bar)
            + x_bar.T @ (plan.sum(axis=0)[:, None] * yb)
        )
    cross = -2.0 * xb.T @ (plan @ yb)
    if cfg.gradient is GradientForm.CROSS:
        return cross
    # ||x_i Q||^2 is weighted by the row mass of the plan
    return 2.0 * xb.T @ (plan.sum(axis=1)[:, None] * q.apply(xb)) + cross


def _transport_step(
    q: LinearMap,
    xb: np.ndarray,
    yb: np.ndarray,
    prior: PriorPlan | None,
    cfg: UnsupConfig,
) -> tuple[LinearMap, float]:
    costs = transport_costs(q, xb, yb, cfg)
    plan = solve_plan(costs, prior, cfg)
    grad = transport_gradient(q, xb, yb, plan.values, cfg)
    updated = q.matrix - (cfg.learning_rate / xb.shape[0]) * grad
    if not np.isfinite(updated).all():
        raise DivergenceError("unsupervised step produced a non-finite map")
    return LinearMap(matrix=orthogonalize(updated), orthogonal=True), plan.cost(costs)


def unsup_step(
    q: LinearMap,
    xb: np.ndarray,
    yb: np.ndarray,
    prior: PriorPlan | None,
    cfg: UnsupConfig,
) -> LinearMap:
    """One transport-then-gradient step, projected back onto orthogonal maps."""
    return _transport_step(q, xb, yb, prior, cfg)[0]


def transport_objective(
    q: LinearMap,
    xb: np.ndarray,
    yb: np.ndarray,
    epsilon: float,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> float:
    """Entropic Wasserstein cost ``<D, P>`` of mapping ``xb`` onto ``yb``."""
    costs = cost_sq_euclidean(q.apply(xb), yb)
    return sinkhorn(costs, epsilon, max_iters=max_iters, tol=tol).cost(costs)


class UnsupervisedAligner:
    """Runs epochs of stochastic Wasserstein-Procrustes over two spaces."""

    def __init__(self, src: EmbeddingSpace, tgt: EmbeddingSpace, cfg: UnsupConfig):
        if src.dim != tgt.dim:
            raise DimensionMismatchError(
                f"source d={src.dim} and target d={tgt.dim} differ"
            )
        self.src = src
        self.tgt = tgt
        self.cfg = cfg
        self.history: list[float] = []

    @property
    def last_objective(self) -> float | None:
        return self.history[-1] if self.history else None

    def _prior(self, prior_source: LinearMap, xb: np.ndarray, yb: np.ndarray) -> PriorPlan:
        """Boltzmann prior from the RCSLS cost of the supervised map on this batch."""
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                costs = cost_rcsls(xb, yb, prior_source, self.cfg.prior_k)
                return boltzmann_prior(costs, self.cfg.temperature)
            except ValidationError as exc:
                raise DivergenceError(
                    "supervised map overflows the prior cost; lower the supervised learning rate"
                ) from exc

    def fit(
        self,
        init: LinearMap,
        prior_source: LinearMap | None = None,
        seed: int | None = None,
    ) -> LinearMap:
        """Train from ``init``; ``prior_source`` is the supervised map behind the prior."""
        rng = np.random.default_rng(self.cfg.seed if seed is None else seed)
        q = init.project_orthogonal()
        objectives = []
        for _ in range(self.cfg.iters_per_epoch):
            xb = sample_batch(self.src, self.cfg, rng)
            yb = sample_batch(self.tgt, self.cfg, rng)
            prior = None
            if prior_source is not None and self.cfg.use_pot:
                prior = self._prior(prior_source, xb, yb)
            q, objective = _transport_step(q, xb, yb, prior, self.cfg)
            objectives.append(objective)

        if objectives:
            self.history.append(float(np.mean(objectives)))
            logger.debug("Unsupervised epoch mean objective %.6f", self.history[-1])
        return q


def train_unsupervised(
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    init: LinearMap,
    prior_source: LinearMap | None,
    cfg: UnsupConfig,
    seed: int | None = None,
) -> LinearMap:
    """One epoch of unsupervised training; see :class:`UnsupervisedAligner`."""
    return UnsupervisedAligner(src, tgt, cfg).fit(init, prior_source, seed=seed)
