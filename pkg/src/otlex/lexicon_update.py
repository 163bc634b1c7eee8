"""Bi-directional lexicon update: mutual nearest neighbours ranked by credit score.

Forward distances compare mapped source rows ``x Q`` with target rows; backward
distances compare source rows with target rows mapped back (``y Qᵀ``).  A pair
is a candidate when each side is the other's nearest neighbour.  Its credit
score is the margin between the pair's distance and the mean distance to the
next ``K`` competitors, summed over both directions.
"""

import logging

import numpy as np

from .linalg import k_smallest_sorted, unit_rows
from .models import (
    BLUConfig,
    DistanceMetric,
    EmbeddingSpace,
    Lexicon,
    LexiconPair,
    LinearMap,
    Origin,
    ScoredPair,
)
from .ot_core import cost_sq_euclidean

logger = logging.getLogger(__name__)


def distance_matrix(
    a: np.ndarray, b: np.ndarray, metric: DistanceMetric = DistanceMetric.COSINE_DISTANCE
) -> np.ndarray:
    if metric is DistanceMetric.SQ_EUCLIDEAN:
        return cost_sq_euclidean(a, b).values
    return 1.0 - unit_rows(a) @ unit_rows(b).T


def forward_distances(
    x: np.ndarray,
    y: np.ndarray,
    q: LinearMap,
    metric: DistanceMetric = DistanceMetric.COSINE_DISTANCE,
) -> np.ndarray:
    """``D_ij = dist(x_i Q, y_j)``."""
    return distance_matrix(q.apply(x), y, metric)


def backward_distances(
    x: np.ndarray,
    y: np.ndarray,
    q: LinearMap,
    metric: DistanceMetric = DistanceMetric.COSINE_DISTANCE,
) -> np.ndarray:
    """``D_ij = dist(x_i, y_j Q⁻¹)`` (``Qᵀ`` for orthogonal maps)."""
    return distance_matrix(x, y @ q.backward(), metric)


def mutual_pairs(d_fwd: np.ndarray, d_bwd: np.ndarray) -> list[tuple[int, int]]:
    """Pairs that are a row argmin of ``d_fwd`` and a column argmin of ``d_bwd``."""
    best_tgt = np.argmin(d_fwd, axis=1)
    best_src = np.argmin(d_bwd, axis=0)
    return [(int(i), int(j)) for i, j in enumerate(best_tgt) if best_src[j] == i]


def bidirectional_candidates(
    x: np.ndarray,
    y: np.ndarray,
    q: LinearMap,
    metric: DistanceMetric = DistanceMetric.COSINE_DISTANCE,
) -> list[tuple[int, int]]:
    """Intersection of forward and backward nearest-neighbour translations."""
    return mutual_pairs(
        forward_distances(x, y, q, metric), backward_distances(x, y, q, metric)
    )


def _check_k(k: int, limit: int) -> None:
    if not 1 <= k < limit:
        raise ValueError(f"K={k} out of range [1, {limit - 1}]")


def credit_scores(
    d_fwd: np.ndarray,
    d_bwd: np.ndarray,
    pairs: list[tuple[int, int]],
    k: int,
) -> list[ScoredPair]:
    """Score each pair by its forward and backward margins over ``k`` competitors."""
    _check_k(k, d_fwd.shape[1])
    _check_k(k, d_bwd.shape[0])
    if not pairs:
        return []
    rows = np.array([i for i, _ in pairs])
    cols = np.array([j for _, j in pairs])
    span = np.arange(len(pairs))

    fwd = d_fwd[rows].copy()
    fwd[span, cols] = np.inf
    fwd_margin = k_smallest_sorted(fwd, k).mean(axis=1) - d_fwd[rows, cols]

    bwd = d_bwd[:, cols].T.copy()
    bwd[span, rows] = np.inf
    bwd_margin = k_smallest_sorted(bwd, k).mean(axis=1) - d_bwd[rows, cols]

    return [
        ScoredPair.build(int(i), int(j), float(f), float(b))
        for i, j, f, b in zip(rows, cols, fwd_margin, bwd_margin, strict=True)
    ]


def rank_candidates(
    scored: list[ScoredPair], annotated: Lexicon, cap: int
) -> list[ScoredPair]:
    """Top ``cap`` scored pairs absent from ``annotated``, best first."""
    known = annotated.keys()
    ranked = sorted(scored, key=lambda p: (-p.cs_total, p.src_index, p.tgt_index))
    return [p for p in ranked if (p.src_index, p.tgt_index) not in known][:cap]


def select_additional(
    scored: list[ScoredPair], annotated: Lexicon, cap: int
) -> Lexicon:
    """``annotated`` extended by the best ``cap`` new pairs, tagged additional."""
    selected = [
        LexiconPair(src=p.src_index, tgt=p.tgt_index, origin=Origin.ADDITIONAL)
        for p in rank_candidates(scored, annotated, cap)
    ]
    return annotated.extended(selected)


class BidirectionalLexiconUpdate:
    """Blocked BLU over the top ``cfg.pool`` rows of each space.

    Only the nearest index and the ``K + 1`` smallest distances of every row
    and column are kept, so no pool×pool matrix is materialized.
    """

    def __init__(self, cfg: BLUConfig):
        self.cfg = cfg

    def _nearest(
        self, queries: np.ndarray, keys: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        if self.cfg.metric is DistanceMetric.COSINE_DISTANCE:
            queries, keys = unit_rows(queries), unit_rows(keys)
        best = np.empty(queries.shape[0], dtype=np.int64)
        head = np.empty((queries.shape[0], min(self.cfg.K + 1, keys.shape[0])))
        for start in range(0, queries.shape[0], self.cfg.block_size):
            stop = start + self.cfg.block_size
            block = distance_matrix(queries[start:stop], keys, self.cfg.metric)
            best[start:stop] = np.argmin(block, axis=1)
            head[start:stop] = k_smallest_sorted(block, self.cfg.K + 1)
        return best, head

    def score(
        self, src: EmbeddingSpace, tgt: EmbeddingSpace, q: LinearMap
    ) -> list[ScoredPair]:
        """Credit-scored mutual nearest neighbours of the two pools under ``q``."""
        x = src.top(self.cfg.pool)
        y = tgt.top(self.cfg.pool)
        _check_k(self.cfg.K, y.shape[0])
        _check_k(self.cfg.K, x.shape[0])

        best_tgt, fwd_head = self._nearest(q.apply(x), y)
        best_src, bwd_head = self._nearest(y @ q.backward(), x)

        # the pair's own distance is the row minimum, the next K are its competitors
        fwd_margin = fwd_head[:, 1:].mean(axis=1) - fwd_head[:, 0]
        bwd_margin = bwd_head[:, 1:].mean(axis=1) - bwd_head[:, 0]
        scored = [
            ScoredPair.build(
                i, int(j), float(fwd_margin[i]), float(bwd_margin[j])
            )
            for i, j in enumerate(best_tgt)
            if best_src[j] == i
        ]
        logger.debug("BLU found %d mutual pairs in pools of %d", len(scored), len(x))
        return scored

    def run(
        self,
        src: EmbeddingSpace,
        tgt: EmbeddingSpace,
        q: LinearMap,
        annotated: Lexicon,
    ) -> Lexicon:
        """Rebuild the extended lexicon from ``annotated``."""
        return select_additional(self.score(src, tgt, q), annotated, self.cfg.cap)


def induce(
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    q: LinearMap,
    cfg: BLUConfig,
    annotated: Lexicon | None = None,
) -> list[ScoredPair]:
    """Standalone BLU: the ``cfg.cap`` best new pairs, best first."""
    scored = BidirectionalLexiconUpdate(cfg).score(src, tgt, q)
    return rank_candidates(scored, annotated or Lexicon(), cfg.cap)
