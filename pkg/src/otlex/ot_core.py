"""Cost matrices, entropic Sinkhorn, Boltzmann priors and prior optimal transport.

Transport plans use unit marginals: an m×m plan has every row and column
summing to 1 (total mass m).  Plans are carried as dual potentials ``f, g`` with
``P_ij = exp((f_i + g_j - D_ij) / eps)``.  Each regularization level, annealed
from the cost range down to the requested ``eps``, runs POT's stabilized
kernel scaling and drops to log-domain sweeps when the kernel underflows.
"""

import logging

import numpy as np
import ot
from scipy.special import kl_div, logsumexp, softmax

from .errors import DimensionMismatchError, SinkhornError
from .linalg import top_k_mean, unit_rows
from .models import CostMatrix, LinearMap, Metric, PriorPlan, TransportPlan

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 10000
DEFAULT_TOL = 1e-6
PRIOR_FLOOR = 1e-300
CHECK_EVERY = 10
ANNEAL_FACTOR = 0.5
ANNEAL_TOL = 1e-4


def _check_same_width(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(
            f"expected two matrices with equal width, got {a.shape} and {b.shape}"
        )


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------


def cost_sq_euclidean(a: np.ndarray, b: np.ndarray) -> CostMatrix:
    """Squared Euclidean distance between every row of ``a`` and of ``b``."""
    _check_same_width(a, b)
    values = (
        np.einsum("ij,ij->i", a, a)[:, None]
        + np.einsum("ij,ij->i", b, b)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(values, 0.0, out=values)
    return CostMatrix(values=values, metric=Metric.SQ_EUCLIDEAN)


def cost_cosine_distance(a: np.ndarray, b: np.ndarray) -> CostMatrix:
    """One minus cosine similarity between every row of ``a`` and of ``b``."""
    _check_same_width(a, b)
    return CostMatrix(
        values=1.0 - unit_rows(a) @ unit_rows(b).T, metric=Metric.COSINE_DISTANCE
    )


def cost_rcsls(a: np.ndarray, b: np.ndarray, q: LinearMap, k: int) -> CostMatrix:
    """RCSLS cost between mapped rows ``a @ Q`` and rows of ``b``.

    ``C_ij = -2 s_ij + mean_k(s_i·) + mean_k(s_·j)`` with ``s = (aQ) bᵀ``; the
    neighbour pools are the argument matrices themselves.
    """
    mapped = q.apply(a)
    _check_same_width(mapped, b)
    limit = min(mapped.shape[0], b.shape[0])
    if not 1 <= k <= limit:
        raise ValueError(f"k={k} out of range [1, {limit}]")
    sim = mapped @ b.T
    values = (
        -2.0 * sim
        + top_k_mean(sim, k, axis=1)[:, None]
        + top_k_mean(sim, k, axis=0)[None, :]
    )
    return CostMatrix(values=values, metric=Metric.RCSLS)


# ---------------------------------------------------------------------------
# Sinkhorn
# ---------------------------------------------------------------------------


def marginal_violation(plan: np.ndarray) -> float:
    """Largest deviation of a row or column sum from 1."""
    return float(
        max(np.abs(plan.sum(axis=1) - 1.0).max(), np.abs(plan.sum(axis=0) - 1.0).max())
    )


def _anneal_schedule(costs: np.ndarray, epsilon: float) -> list[float]:
    """Geometric regularization schedule from the cost range down to ``epsilon``."""
    spread = float(costs.max() - costs.min())
    schedule = []
    current = spread
    while current > epsilon:
        schedule.append(current)
        current *= ANNEAL_FACTOR
    schedule.append(epsilon)
    return schedule


def _unit_plan(costs: np.ndarray, eps: float, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.exp((f[:, None] + g[None, :] - costs) / eps)


def _kernel_stage(
    costs: np.ndarray,
    eps: float,
    f: np.ndarray,
    g: np.ndarray,
    max_iters: int,
    tol: float,
    trace: list[float] | None,
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Stabilized kernel scaling from POT, warm-started from ``f, g``.

    POT works on histograms summing to 1, so its row potential is ``f`` shifted
    by ``eps * log(m)``.  When a trace is requested the stage runs in chunks of
    ``CHECK_EVERY`` sweeps and records the dual objective after each chunk.
    Returns the potentials, the sweeps used and whether they stayed finite.
    """
    m = costs.shape[0]
    hist = np.full(m, 1.0 / m)
    shift = eps * np.log(m)
    chunk = CHECK_EVERY if trace is not None else max_iters
    sweeps = 0
    while sweeps < max_iters:
        budget = min(chunk, max_iters - sweeps)
        _, log = ot.bregman.sinkhorn_stabilized(
            hist,
            hist,
            costs,
            eps,
            numItermax=budget,
            # L2 column error of the histograms bounds the unit-marginal max error
            stopThr=0.0 if trace is not None else 0.5 * tol / m,
            warmstart=(f - shift, g),
            print_period=CHECK_EVERY,
            log=True,
            warn=False,
        )
        used = int(log["n_iter"]) + 1
        sweeps += used
        alpha, beta = np.asarray(log["alpha"]), np.asarray(log["beta"])
        if not (np.isfinite(alpha).all() and np.isfinite(beta).all()):
            return f, g, sweeps, False
        # exact row update; also undoes the offset POT leaves after a final absorption
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            plan = _unit_plan(costs, eps, alpha + shift, beta)
            rows = plan.sum(axis=1)
            new_f = alpha + shift - eps * np.log(rows)
        if not np.isfinite(new_f).all():
            return f, g, sweeps, False
        f, g = new_f, beta
        plan /= rows[:, None]
        if trace is not None:
            trace.append(float(f.sum() + g.sum() - eps * m))
        if marginal_violation(plan) < tol:
            break
        if used < budget:
            # POT left early without meeting the threshold: numerical trouble
            return f, g, sweeps, False
    return f, g, sweeps, True


def _log_stage(
    costs: np.ndarray,
    eps: float,
    f: np.ndarray,
    g: np.ndarray,
    max_iters: int,
    tol: float,
    trace: list[float] | None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Log-domain sweeps for kernels that underflow even after absorption."""
    m = costs.shape[0]
    it = 0
    for it in range(1, max_iters + 1):
        g = -eps * logsumexp((f[:, None] - costs) / eps, axis=0)
        f = -eps * logsumexp((g[None, :] - costs) / eps, axis=1)
        if not (np.isfinite(f).all() and np.isfinite(g).all()):
            raise SinkhornError(
                f"non-finite scalings at eps={eps:g}; epsilon too small for the cost scale"
            )
        if it % CHECK_EVERY and it != max_iters:
            continue
        # rows are exact after the f update, so the dual is sum(f) + sum(g) - eps*m
        if trace is not None:
            trace.append(float(f.sum() + g.sum() - eps * m))
        log_cols = logsumexp((f[:, None] + g[None, :] - costs) / eps, axis=0)
        if np.abs(np.expm1(log_cols)).max() < tol:
            break
    return f, g, it


def sinkhorn(
    costs: CostMatrix,
    epsilon: float,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    record_trace: bool = False,
) -> TransportPlan:
    """Entropic OT plan with unit marginals for a square cost matrix.

    Minimizes ``<D, P> + eps * sum P (log P - 1)`` over plans whose rows and
    columns sum to 1.  ``max_iters`` caps the total number of sweeps; the
    annealing stages before the target ``eps`` share at most half of it.  With
    ``record_trace`` the final stage records the dual objective every
    ``CHECK_EVERY`` sweeps.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    values = costs.values
    rows, cols = values.shape
    if rows != cols:
        raise DimensionMismatchError(f"Sinkhorn needs a square cost matrix, got {values.shape}")

    f = np.zeros(rows)
    g = np.zeros(cols)
    trace: list[float] = []
    iterations = 0
    schedule = _anneal_schedule(values, epsilon)
    anneal_budget = max_iters // 2
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        budget = (max_iters if last else anneal_budget) - iterations
        if budget <= 0:
            continue
        stage_tol = tol if last else max(tol, ANNEAL_TOL)
        stage_trace = trace if last and record_trace else None
        recorded = len(trace)
        new_f, new_g, used, finite = _kernel_stage(
            values, eps, f, g, budget, stage_tol, stage_trace
        )
        iterations += used
        if not finite and budget > used:
            logger.debug("Kernel underflow at eps=%g, switching to log-domain sweeps", eps)
            # the log-domain pass restarts from the stage's initial potentials
            del trace[recorded:]
            new_f, new_g, used = _log_stage(
                values, eps, f, g, budget - used, stage_tol, stage_trace
            )
            iterations += used
        f, g = new_f, new_g

    plan = _unit_plan(values, epsilon, f, g)
    violation = marginal_violation(plan)
    converged = violation < tol
    if not converged:
        logger.warning(
            "Sinkhorn stopped after %d sweeps with marginal violation %.2e",
            iterations,
            violation,
        )
    return TransportPlan(
        values=plan,
        violation=violation,
        iterations=iterations,
        converged=converged,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# Prior optimal transport
# ---------------------------------------------------------------------------


def boltzmann_prior(
    costs: CostMatrix, temperature: float, floor: float = PRIOR_FLOOR
) -> PriorPlan:
    """Row-wise softmax of ``-C / T``, floored and renormalized."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    gamma = softmax(-costs.values / temperature, axis=1)
    np.maximum(gamma, floor, out=gamma)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return PriorPlan(values=gamma)


def prior_ot(
    costs: CostMatrix,
    prior: PriorPlan,
    varepsilon: float,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    record_trace: bool = False,
) -> TransportPlan:
    """Minimize ``<D, P> + varepsilon * KL(P || prior)`` over unit-marginal plans.

    Solved as Sinkhorn on the prior-adjusted cost ``D - varepsilon * log(prior)``.
    The trace is shifted by ``varepsilon * sum(prior)`` so that it rises to
    :func:`pot_objective` at the solution.
    """
    if costs.shape != prior.values.shape:
        raise DimensionMismatchError(
            f"cost {costs.shape} and prior {prior.values.shape} shapes differ"
        )
    if varepsilon <= 0:
        raise ValueError(f"varepsilon must be positive, got {varepsilon}")
    adjusted = CostMatrix(
        values=costs.values - varepsilon * np.log(prior.values),
        metric=Metric.PRIOR_ADJUSTED,
    )
    plan = sinkhorn(
        adjusted, varepsilon, max_iters=max_iters, tol=tol, record_trace=record_trace
    )
    if not plan.trace:
        return plan
    offset = varepsilon * float(prior.values.sum())
    return plan.model_copy(update={"trace": [value + offset for value in plan.trace]})


def kl_divergence(plan: np.ndarray, prior: np.ndarray) -> float:
    """Generalized KL divergence ``sum P log(P / G) - P + G``."""
    return float(kl_div(plan, prior).sum())


def pot_objective(
    costs: CostMatrix, plan: np.ndarray, prior: PriorPlan, varepsilon: float
) -> float:
    """``<D, P> + varepsilon * KL(P || prior)``."""
    return float(np.sum(costs.values * plan)) + varepsilon * kl_divergence(
        plan, prior.values
    )
