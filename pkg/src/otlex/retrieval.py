"""Translation retrieval (nearest neighbour and CSLS) and precision@k."""

import logging
from collections.abc import Sequence

import numpy as np

from .linalg import top_k_indices, top_k_mean, unit_rows
from .models import EmbeddingSpace, Lexicon, LinearMap, RetrievalMethod

logger = logging.getLogger(__name__)

DEFAULT_BLOCK = 4096


def _ranked(scores: np.ndarray, top: int) -> np.ndarray:
    """Columns of the ``top`` best scores per row, best first, lower index on ties."""
    idx = top_k_indices(scores, top)
    vals = np.take_along_axis(scores, idx, axis=1)
    order = np.lexsort((idx, -vals), axis=-1)
    return np.take_along_axis(idx, order, axis=1)


def _target_hubness(
    mapped_pool: np.ndarray, targets: np.ndarray, k: int, block_size: int
) -> np.ndarray:
    """Mean similarity of each target to its ``k`` nearest mapped source rows."""
    out = np.empty(targets.shape[0])
    for start in range(0, targets.shape[0], block_size):
        stop = start + block_size
        out[start:stop] = top_k_mean(targets[start:stop] @ mapped_pool.T, k, axis=1)
    return out


def retrieve(
    q: LinearMap,
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    query_indices: Sequence[int] | np.ndarray,
    method: RetrievalMethod = RetrievalMethod.CSLS,
    csls_k: int = 10,
    top: int = 1,
    pool: int | None = None,
    block_size: int = DEFAULT_BLOCK,
) -> np.ndarray:
    """Ranked target indices (``len(queries)`` × ``top``) for each query word.

    ``nn`` ranks by cosine similarity with the mapped query.  ``csls`` ranks by
    ``2 cos(xQ, y) - r_T(xQ) - r_S(y)``, where ``r_T`` averages the query's
    ``csls_k`` nearest targets and ``r_S`` averages the target's ``csls_k``
    nearest mapped source rows among the first ``pool`` source words.
    """
    queries = np.asarray(query_indices, dtype=np.int64)
    if queries.size and (queries.min() < 0 or queries.max() >= src.size):
        raise IndexError(f"query index out of range for a space of size {src.size}")
    top = min(top, tgt.size)
    targets = unit_rows(tgt.matrix)
    mapped = unit_rows(q.apply(src.matrix[queries]))

    hubness = None
    if method is RetrievalMethod.CSLS:
        mapped_pool = unit_rows(q.apply(src.top(pool or src.size)))
        limit = min(tgt.size, mapped_pool.shape[0])
        if not 1 <= csls_k <= limit:
            raise ValueError(f"csls_k={csls_k} out of range [1, {limit}]")
        hubness = _target_hubness(mapped_pool, targets, csls_k, block_size)

    ranked = np.empty((queries.size, top), dtype=np.int64)
    for start in range(0, queries.size, block_size):
        stop = start + block_size
        scores = mapped[start:stop] @ targets.T
        if hubness is not None:
            scores = 2.0 * scores - top_k_mean(scores, csls_k, axis=1)[:, None] - hubness
        ranked[start:stop] = _ranked(scores, top)
    return ranked


def precision_at_ks(
    q: LinearMap,
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    test_lexicon: Lexicon,
    method: RetrievalMethod = RetrievalMethod.CSLS,
    ks: Sequence[int] = (1,),
    csls_k: int = 10,
    pool: int | None = None,
) -> dict[int, float]:
    """Fraction of test sources with a gold target among their top ``k`` retrievals."""
    if not len(test_lexicon):
        raise ValueError("precision needs a nonempty test lexicon")
    gold = test_lexicon.by_source()
    sources = list(gold)
    ranked = retrieve(
        q, src, tgt, sources, method=method, csls_k=csls_k, top=max(ks), pool=pool
    )
    result = {}
    for k in ks:
        hits = sum(
            not gold[s].isdisjoint(row[:k].tolist())
            for s, row in zip(sources, ranked, strict=True)
        )
        result[k] = hits / len(sources)
    logger.debug("%s precision over %d sources: %s", method.value, len(sources), result)
    return result


def precision_at_k(
    q: LinearMap,
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    test_lexicon: Lexicon,
    method: RetrievalMethod = RetrievalMethod.CSLS,
    k: int = 1,
    csls_k: int = 10,
) -> float:
    return precision_at_ks(
        q, src, tgt, test_lexicon, method=method, ks=(k,), csls_k=csls_k
    )[k]


def precision_at_1(
    q: LinearMap,
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    test_lexicon: Lexicon,
    method: RetrievalMethod = RetrievalMethod.CSLS,
    csls_k: int = 10,
) -> float:
    """Word translation accuracy@1, one-to-many aware."""
    return precision_at_k(q, src, tgt, test_lexicon, method=method, k=1, csls_k=csls_k)


def reverse_direction(
    q: LinearMap, lexicon: Lexicon
) -> tuple[LinearMap, Lexicon]:
    """Map and lexicon for evaluating the target→source direction."""
    backward = q.backward()
    return (
        LinearMap(matrix=backward, orthogonal=q.orthogonal),
        Lexicon.from_pairs((p.tgt, p.src) for p in lexicon.pairs),
    )
