"""Cyclic and parallel semi-supervision over a supervised and an unsupervised aligner.

Two messages connect the aligners.  The supervised map becomes a transport
prior for the unsupervised aligner, and the unsupervised map extends the
supervised lexicon through a bi-directional lexicon update.  Every trainer call
gets its own seed derived from the run seed, its role and the epoch, so a
component sees the same random stream in every strategy.
"""

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import derive_seed
from .embed_io import subset_rows
from .errors import DimensionMismatchError, DivergenceError
from .lexicon_update import BidirectionalLexiconUpdate
from .models import (
    EmbeddingSpace,
    EpochRecord,
    InitMethod,
    Lexicon,
    LinearMap,
    Origin,
    RunReport,
    Side,
    Strategy,
    StrategyConfig,
)
from .supervised import SupervisedAligner, procrustes
from .threads import thread_count
from .unsupervised import UnsupervisedAligner, transport_objective

logger = logging.getLogger(__name__)

EpochCallback = Callable[[EpochRecord], None]


def initial_map(
    src: EmbeddingSpace, tgt: EmbeddingSpace, annotated: Lexicon, cfg: StrategyConfig
) -> LinearMap:
    """Procrustes on the annotated lexicon, or the identity for a cold start."""
    if cfg.init is InitMethod.IDENTITY:
        return LinearMap.identity(src.dim)
    return procrustes(
        subset_rows(src, annotated, Side.SOURCE), subset_rows(tgt, annotated, Side.TARGET)
    )


def additional_precision(lexicon: Lexicon, gold: Lexicon | None) -> float | None:
    """Share of additional pairs whose target is a gold translation of the source."""
    if gold is None:
        return None
    expected = gold.by_source()
    judged = [
        p for p in lexicon.with_origin(Origin.ADDITIONAL).pairs if p.src in expected
    ]
    if not judged:
        return None
    return sum(p.tgt in expected[p.src] for p in judged) / len(judged)


def wasserstein_costs(
    candidates: list[LinearMap],
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    cfg: StrategyConfig,
) -> list[float]:
    """Entropic transport cost of each candidate map on one shared seeded batch."""
    pool_src = min(cfg.unsup.sample_pool, src.size)
    pool_tgt = min(cfg.unsup.sample_pool, tgt.size)
    size = min(cfg.selection_batch, pool_src, pool_tgt)
    rng = np.random.default_rng(derive_seed(cfg.seed, "select"))
    xb = src.matrix[rng.choice(pool_src, size=size, replace=False)]
    yb = tgt.matrix[rng.choice(pool_tgt, size=size, replace=False)]
    return [
        transport_objective(
            q,
            xb,
            yb,
            cfg.unsup.epsilon,
            max_iters=cfg.selection_sinkhorn_iters,
            tol=cfg.unsup.sinkhorn_tol,
        )
        for q in candidates
    ]


def select_by_wasserstein(
    q_a: LinearMap,
    q_b: LinearMap,
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    cfg: StrategyConfig,
) -> LinearMap:
    """The candidate with the lower transport cost; ties go to ``q_a``."""
    cost_a, cost_b = wasserstein_costs([q_a, q_b], src, tgt, cfg)
    return q_a if cost_a <= cost_b else q_b


def _ensure_finite(q: LinearMap, role: str, epoch: int) -> LinearMap:
    if not np.isfinite(q.matrix).all():
        raise DivergenceError(f"{role} aligner produced a non-finite map in epoch {epoch}")
    return q


class StrategyRunner:
    """Runs one strategy over a pair of spaces and an annotated lexicon."""

    def __init__(
        self,
        src: EmbeddingSpace,
        tgt: EmbeddingSpace,
        annotated: Lexicon,
        cfg: StrategyConfig,
        gold: Lexicon | None = None,
        on_epoch: EpochCallback | None = None,
    ):
        if not len(annotated):
            raise ValueError("annotated lexicon is empty")
        if src.dim != tgt.dim:
            raise DimensionMismatchError(
                f"source d={src.dim} and target d={tgt.dim} differ"
            )
        annotated.check_bounds(src.size, tgt.size)
        self.src = src
        self.tgt = tgt
        self.annotated = annotated
        self.cfg = cfg
        self.gold = gold
        self.on_epoch = on_epoch
        self.sup = SupervisedAligner(src, tgt, cfg.sup)
        self.unsup = UnsupervisedAligner(src, tgt, cfg.unsup)
        self.blu = BidirectionalLexiconUpdate(cfg.blu)
        self.lexicon = annotated
        self.records: list[EpochRecord] = []
        self.selection: dict[str, float] = {}
        self.candidates: dict[str, LinearMap] = {}
        self.chosen = ""

    # -- component calls -------------------------------------------------

    def _train_sup(self, init: LinearMap, epoch: int) -> LinearMap:
        q = self.sup.fit(self.lexicon, init, seed=derive_seed(self.cfg.seed, "sup", epoch))
        return _ensure_finite(q, "supervised", epoch)

    def _train_unsup(
        self, init: LinearMap, prior_source: LinearMap | None, epoch: int
    ) -> LinearMap:
        q = self.unsup.fit(
            init, prior_source, seed=derive_seed(self.cfg.seed, "unsup", epoch)
        )
        return _ensure_finite(q, "unsupervised", epoch)

    def _update_lexicon(self, q: LinearMap) -> None:
        self.lexicon = self.blu.run(self.src, self.tgt, q.project_orthogonal(), self.annotated)

    def _record(self, epoch: int, sup_ran: bool, unsup_ran: bool) -> None:
        record = EpochRecord(
            epoch=epoch,
            sup_loss=self.sup.last_loss if sup_ran else None,
            unsup_objective=self.unsup.last_objective if unsup_ran else None,
            lexicon_size=len(self.lexicon),
            additional_size=len(self.lexicon) - len(self.annotated),
            additional_precision=additional_precision(self.lexicon, self.gold),
        )
        self.records.append(record)
        logger.info(
            "epoch %d: lexicon %d (+%d), sup loss %s, unsup objective %s",
            epoch,
            record.lexicon_size,
            record.additional_size,
            record.sup_loss,
            record.unsup_objective,
        )
        if self.on_epoch is not None:
            self.on_epoch(record)

    def _report(self) -> RunReport:
        return RunReport(
            strategy=self.cfg.strategy,
            seed=self.cfg.seed,
            epochs=self.records,
            chosen=self.chosen,
            selection=self.selection,
        )

    # -- strategies ------------------------------------------------------

    def css(self) -> tuple[LinearMap, RunReport]:
        """Sup, then UnSup fed by Sup, then BLU over UnSup; UnSup feeds the next Sup."""
        cfg = self.cfg
        q = initial_map(self.src, self.tgt, self.annotated, cfg)
        for epoch in range(cfg.epochs):
            q_sup = q if cfg.ablate_sup else self._train_sup(q, epoch)
            if cfg.ablate_unsup:
                q = q_sup
            else:
                prior_source = None if cfg.ablate_pot else q_sup
                q = self._train_unsup(q_sup.project_orthogonal(), prior_source, epoch)
            if not cfg.ablate_blu:
                self._update_lexicon(q)
            self._record(epoch, not cfg.ablate_sup, not cfg.ablate_unsup)
        self.chosen = "unsup" if not cfg.ablate_unsup else "sup"
        return q, self._report()

    def pss(self) -> tuple[LinearMap, RunReport]:
        """Sup and UnSup on separate maps, exchanging previous-epoch snapshots."""
        cfg = self.cfg
        init = initial_map(self.src, self.tgt, self.annotated, cfg)
        q_sup = init
        q_unsup = init.project_orthogonal()
        workers = 2 if thread_count() != 0 else 1
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for epoch in range(cfg.epochs):
                prev_sup, prev_unsup = q_sup, q_unsup
                if not cfg.ablate_blu:
                    self._update_lexicon(prev_unsup)
                sup_job = (
                    None
                    if cfg.ablate_sup
                    else pool.submit(self._train_sup, prev_sup, epoch)
                )
                unsup_job = (
                    None
                    if cfg.ablate_unsup
                    else pool.submit(
                        self._train_unsup,
                        prev_unsup,
                        None if cfg.ablate_pot else prev_sup,
                        epoch,
                    )
                )
                if sup_job is not None:
                    q_sup = sup_job.result()
                if unsup_job is not None:
                    q_unsup = unsup_job.result()
                self._record(epoch, not cfg.ablate_sup, not cfg.ablate_unsup)

        self.candidates = {"sup": q_sup, "unsup": q_unsup}
        if cfg.ablate_sup:
            self.chosen = "unsup"
            return q_unsup, self._report()
        if cfg.ablate_unsup:
            self.chosen = "sup"
            return q_sup, self._report()
        cost_sup, cost_unsup = wasserstein_costs([q_sup, q_unsup], self.src, self.tgt, cfg)
        self.selection = {"sup": cost_sup, "unsup": cost_unsup}
        self.chosen = "sup" if cost_sup <= cost_unsup else "unsup"
        logger.info(
            "selection: sup %.6f, unsup %.6f -> %s", cost_sup, cost_unsup, self.chosen
        )
        return (q_sup if self.chosen == "sup" else q_unsup), self._report()

    def sup_only(self) -> tuple[LinearMap, RunReport]:
        q = initial_map(self.src, self.tgt, self.annotated, self.cfg)
        for epoch in range(self.cfg.epochs):
            q = self._train_sup(q, epoch)
            self._record(epoch, True, False)
        self.chosen = "sup"
        return q, self._report()

    def unsup_only(self) -> tuple[LinearMap, RunReport]:
        q = initial_map(self.src, self.tgt, self.annotated, self.cfg).project_orthogonal()
        for epoch in range(self.cfg.epochs):
            q = self._train_unsup(q, None, epoch)
            self._record(epoch, False, True)
        self.chosen = "unsup"
        return q, self._report()

    def run(self) -> tuple[LinearMap, RunReport]:
        strategies = {
            Strategy.CSS: self.css,
            Strategy.PSS: self.pss,
            Strategy.SUP_ONLY: self.sup_only,
            Strategy.UNSUP_ONLY: self.unsup_only,
        }
        logger.info("Running %s for %d epochs", self.cfg.strategy.value, self.cfg.epochs)
        return strategies[self.cfg.strategy]()


def run_css(
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    annotated: Lexicon,
    cfg: StrategyConfig,
    gold: Lexicon | None = None,
) -> tuple[LinearMap, RunReport]:
    return StrategyRunner(src, tgt, annotated, cfg, gold=gold).css()


def run_pss(
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    annotated: Lexicon,
    cfg: StrategyConfig,
    gold: Lexicon | None = None,
) -> tuple[LinearMap, RunReport]:
    return StrategyRunner(src, tgt, annotated, cfg, gold=gold).pss()


def run_strategy(
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    annotated: Lexicon,
    cfg: StrategyConfig,
    gold: Lexicon | None = None,
) -> tuple[LinearMap, RunReport]:
    """Run ``cfg.strategy``; see :class:`StrategyRunner`."""
    return StrategyRunner(src, tgt, annotated, cfg, gold=gold).run()
