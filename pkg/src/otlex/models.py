"""Data models for embedding spaces, lexicons, maps, plans and run configuration."""

import logging
from collections import defaultdict
from collections.abc import Iterable
from enum import StrEnum
from typing import Any

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    computed_field,
    field_validator,
    model_validator,
)

from .linalg import orthogonalize

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-6
UNIT_NORM_TOL = 1e-6
DEFAULT_MAX_VOCAB = 200_000


class Normalization(StrEnum):
    RAW = "raw"
    UNIT = "unit"


class Origin(StrEnum):
    ANNOTATED = "annotated"
    ADDITIONAL = "additional"


class Side(StrEnum):
    SOURCE = "source"
    TARGET = "target"


class Metric(StrEnum):
    SQ_EUCLIDEAN = "sq_euclidean"
    RCSLS = "rcsls"
    COSINE_DISTANCE = "cosine_distance"
    PRIOR_ADJUSTED = "prior_adjusted"


def _readonly_float_array(value: Any) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    array.setflags(write=False)
    return array


# ---------------------------------------------------------------------------
# Embeddings and lexicons
# ---------------------------------------------------------------------------


class EmbeddingSpace(BaseModel):
    """A vocabulary and its n×d embedding matrix."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    words: list[str]
    matrix: np.ndarray
    normalized: Normalization = Normalization.RAW

    _index: dict[str, int] = PrivateAttr(default_factory=dict)

    @field_validator("matrix", mode="before")
    @classmethod
    def _as_float_matrix(cls, value: Any) -> np.ndarray:
        return _readonly_float_array(value)

    @model_validator(mode="after")
    def _check_invariants(self) -> "EmbeddingSpace":
        if self.matrix.ndim != 2 or self.matrix.shape[1] == 0:
            raise ValueError(f"matrix must be n×d with d > 0, got {self.matrix.shape}")
        if len(self.words) != self.matrix.shape[0]:
            raise ValueError(
                f"{len(self.words)} words for {self.matrix.shape[0]} matrix rows"
            )
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary contains duplicate tokens")
        if self.normalized is Normalization.UNIT and self.matrix.shape[0]:
            norms = np.linalg.norm(self.matrix, axis=1)
            if np.abs(norms - 1.0).max() > UNIT_NORM_TOL:
                raise ValueError("space is flagged unit but a row norm is not 1")
        return self

    def model_post_init(self, __context: Any) -> None:
        self._index = {word: i for i, word in enumerate(self.words)}

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def index_of(self, word: str) -> int | None:
        """Vocabulary index of ``word`` or None when out of vocabulary."""
        return self._index.get(word)

    def top(self, pool: int) -> np.ndarray:
        """Rows of the ``pool`` most frequent words (file order)."""
        return self.matrix[: min(pool, self.size)]


class LexiconPair(BaseModel):
    """One translation pair given as vocabulary indices."""

    model_config = ConfigDict(frozen=True)

    src: int = Field(ge=0)
    tgt: int = Field(ge=0)
    origin: Origin = Origin.ANNOTATED

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.tgt)


class Lexicon(BaseModel):
    """Ordered, duplicate-free list of translation pairs (one-to-many allowed)."""

    model_config = ConfigDict(frozen=True)

    pairs: list[LexiconPair] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_unique(self) -> "Lexicon":
        keys = [pair.key for pair in self.pairs]
        if len(set(keys)) != len(keys):
            raise ValueError("lexicon contains duplicate (src, tgt) pairs")
        return self

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[int, int]], origin: Origin = Origin.ANNOTATED
    ) -> "Lexicon":
        """Build a lexicon from index tuples, dropping repeats in order."""
        seen: set[tuple[int, int]] = set()
        out = []
        for src, tgt in pairs:
            key = (int(src), int(tgt))
            if key in seen:
                continue
            seen.add(key)
            out.append(LexiconPair(src=key[0], tgt=key[1], origin=origin))
        return cls(pairs=out)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def pair_count(self) -> int:
        return len(self.pairs)

    @property
    def src_indices(self) -> np.ndarray:
        return np.fromiter((p.src for p in self.pairs), dtype=np.int64, count=len(self))

    @property
    def tgt_indices(self) -> np.ndarray:
        return np.fromiter((p.tgt for p in self.pairs), dtype=np.int64, count=len(self))

    def keys(self) -> set[tuple[int, int]]:
        return {pair.key for pair in self.pairs}

    def by_source(self) -> dict[int, set[int]]:
        """Gold targets grouped by source index, in first-seen source order."""
        grouped: dict[int, set[int]] = defaultdict(set)
        for pair in self.pairs:
            grouped[pair.src].add(pair.tgt)
        return dict(grouped)

    def with_origin(self, origin: Origin) -> "Lexicon":
        return Lexicon(pairs=[p for p in self.pairs if p.origin is origin])

    def extended(self, additional: Iterable[LexiconPair]) -> "Lexicon":
        """This lexicon followed by ``additional`` pairs not already present."""
        known = self.keys()
        extra = [p for p in additional if p.key not in known]
        return Lexicon(pairs=[*self.pairs, *extra])

    def check_bounds(self, n_src: int, n_tgt: int) -> None:
        for pair in self.pairs:
            if pair.src >= n_src or pair.tgt >= n_tgt:
                raise IndexError(
                    f"pair {pair.key} out of bounds for spaces of size ({n_src}, {n_tgt})"
                )


# ---------------------------------------------------------------------------
# Maps, costs and plans
# ---------------------------------------------------------------------------


class LinearMap(BaseModel):
    """A d×d map applied to row vectors as ``x @ matrix``."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    orthogonal: bool = False
    rank_deficient: bool = False

    @field_validator("matrix", mode="before")
    @classmethod
    def _as_float_matrix(cls, value: Any) -> np.ndarray:
        return _readonly_float_array(np.array(value, dtype=np.float64, copy=True))

    @model_validator(mode="after")
    def _check_invariants(self) -> "LinearMap":
        rows, cols = self.matrix.shape if self.matrix.ndim == 2 else (0, -1)
        if rows != cols or rows == 0:
            raise ValueError(f"map must be square d×d, got {self.matrix.shape}")
        if self.orthogonal:
            gram = self.matrix.T @ self.matrix
            if np.abs(gram - np.eye(rows)).max() >= ORTHOGONALITY_TOL:
                raise ValueError("map is flagged orthogonal but QᵀQ != I")
        return self

    @classmethod
    def identity(cls, dim: int) -> "LinearMap":
        return cls(matrix=np.eye(dim), orthogonal=True)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return rows @ self.matrix

    def project_orthogonal(self) -> "LinearMap":
        """Nearest orthogonal map (self when already orthogonal)."""
        if self.orthogonal:
            return self
        return LinearMap(matrix=orthogonalize(self.matrix), orthogonal=True)

    def backward(self) -> np.ndarray:
        """Matrix mapping target rows back to the source side."""
        if self.orthogonal:
            return self.matrix.T
        logger.warning("Backward map of a non-orthogonal map uses the pseudo-inverse")
        return np.linalg.pinv(self.matrix)


class CostMatrix(BaseModel):
    """Finite cost matrix with the metric that produced it."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    metric: Metric

    @field_validator("values", mode="before")
    @classmethod
    def _as_float_matrix(cls, value: Any) -> np.ndarray:
        return _readonly_float_array(value)

    @model_validator(mode="after")
    def _check_finite(self) -> "CostMatrix":
        if self.values.ndim != 2:
            raise ValueError("cost matrix must be 2-D")
        if not np.isfinite(self.values).all():
            raise ValueError("cost matrix has non-finite entries")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class TransportPlan(BaseModel):
    """Nonnegative coupling with unit row and column sums (within ``violation``)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    violation: float
    iterations: int
    converged: bool
    trace: list[float] = Field(default_factory=list)

    @field_validator("values", mode="before")
    @classmethod
    def _as_float_matrix(cls, value: Any) -> np.ndarray:
        return _readonly_float_array(value)

    @model_validator(mode="after")
    def _check_nonnegative(self) -> "TransportPlan":
        if (self.values < 0).any():
            raise ValueError("transport plan has negative entries")
        return self

    def cost(self, costs: CostMatrix) -> float:
        """Transport cost ⟨D, P⟩."""
        return float(np.sum(costs.values * self.values))


class PriorPlan(BaseModel):
    """Strictly positive row-stochastic prior Γ."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_float_matrix(cls, value: Any) -> np.ndarray:
        return _readonly_float_array(value)

    @model_validator(mode="after")
    def _check_stochastic(self) -> "PriorPlan":
        if not np.isfinite(self.values).all() or (self.values <= 0).any():
            raise ValueError("prior plan must be finite and strictly positive")
        if np.abs(self.values.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("prior plan rows must sum to 1")
        return self

    @classmethod
    def uniform(cls, rows: int, cols: int) -> "PriorPlan":
        return cls(values=np.full((rows, cols), 1.0 / cols))


class ScoredPair(BaseModel):
    """A mutual-nearest-neighbour candidate with its credit scores."""

    model_config = ConfigDict(frozen=True)

    src_index: int
    tgt_index: int
    cs_forward: float
    cs_backward: float
    cs_total: float

    @model_validator(mode="after")
    def _check_total(self) -> "ScoredPair":
        if self.cs_total != self.cs_forward + self.cs_backward:
            raise ValueError("cs_total must equal cs_forward + cs_backward")
        return self

    @classmethod
    def build(cls, src: int, tgt: int, forward: float, backward: float) -> "ScoredPair":
        return cls(
            src_index=src,
            tgt_index=tgt,
            cs_forward=forward,
            cs_backward=backward,
            cs_total=forward + backward,
        )


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class SupMethod(StrEnum):
    RCSLS = "rcsls"
    PROCRUSTES = "procrustes"


class TransportCost(StrEnum):
    SQ_EUCLIDEAN = "sq_euclidean"
    RCSLS = "rcsls"


class GradientForm(StrEnum):
    EUCLIDEAN = "euclidean"
    CROSS = "cross"


class DistanceMetric(StrEnum):
    COSINE_DISTANCE = "cosine_distance"
    SQ_EUCLIDEAN = "sq_euclidean"


class Strategy(StrEnum):
    CSS = "css"
    PSS = "pss"
    SUP_ONLY = "sup_only"
    UNSUP_ONLY = "unsup_only"


class RetrievalMethod(StrEnum):
    NN = "nn"
    CSLS = "csls"


class InitMethod(StrEnum):
    PROCRUSTES = "procrustes"
    IDENTITY = "identity"


class SupConfig(BaseModel):
    """Supervised aligner hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    method: SupMethod = SupMethod.RCSLS
    batch_size: int = Field(400, ge=1)
    learning_rate: float = Field(1.0, ge=0)
    iters_per_epoch: int = Field(2000, ge=0)
    k: int = Field(10, ge=1)
    neighbor_pool: int = Field(20000, ge=1)
    spectral_clip: bool = True
    seed: int = 0


class UnsupConfig(BaseModel):
    """Unsupervised (Wasserstein–Procrustes) aligner hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(8000, ge=1)
    learning_rate: float = Field(500.0, ge=0)
    iters_per_epoch: int = Field(50, ge=0)
    epsilon: float = Field(0.05, gt=0)
    varepsilon: float = Field(1.0, gt=0)
    temperature: float = Field(0.1, gt=0)
    prior_k: int = Field(10, ge=1)
    sample_pool: int = Field(20000, ge=1)
    use_pot: bool = True
    transport_cost: TransportCost = TransportCost.SQ_EUCLIDEAN
    gradient: GradientForm = GradientForm.CROSS
    sinkhorn_iters: int = Field(10000, ge=1)
    sinkhorn_tol: float = Field(1e-6, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_batch(self) -> "UnsupConfig":
        if self.batch_size > self.sample_pool:
            raise ValueError(
                f"batch_size {self.batch_size} exceeds sample_pool {self.sample_pool}"
            )
        return self


class BLUConfig(BaseModel):
    """Bi-directional lexicon update settings."""

    model_config = ConfigDict(extra="forbid")

    K: int = Field(10, ge=1)
    cap: int = Field(10000, ge=0)
    pool: int = Field(20000, ge=2)
    metric: DistanceMetric = DistanceMetric.COSINE_DISTANCE
    block_size: int = Field(4096, ge=1)


class StrategyConfig(BaseModel):
    """Everything needed to reproduce one alignment run."""

    model_config = ConfigDict(extra="forbid")

    strategy: Strategy = Strategy.CSS
    epochs: int = Field(5, ge=0)
    sup: SupConfig = Field(default_factory=SupConfig)
    unsup: UnsupConfig = Field(default_factory=UnsupConfig)
    blu: BLUConfig = Field(default_factory=BLUConfig)
    ablate_pot: bool = False
    ablate_blu: bool = False
    ablate_sup: bool = False
    ablate_unsup: bool = False
    init: InitMethod = InitMethod.PROCRUSTES
    eval_retrieval: RetrievalMethod = RetrievalMethod.CSLS
    csls_k: int = Field(10, ge=1)
    selection_batch: int = Field(2000, ge=1)
    selection_sinkhorn_iters: int = Field(50000, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_ablations(self) -> "StrategyConfig":
        if self.strategy in (Strategy.SUP_ONLY, Strategy.UNSUP_ONLY):
            switched = [
                name
                for name in ("ablate_pot", "ablate_blu", "ablate_sup", "ablate_unsup")
                if getattr(self, name)
            ]
            if switched:
                raise ValueError(
                    f"{', '.join(switched)} inapplicable to strategy "
                    f"{self.strategy.value}: POT and BLU only exist in css and pss"
                )
        return self


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class EpochRecord(BaseModel):
    """Metrics of one training epoch."""

    epoch: int
    sup_loss: float | None = None
    unsup_objective: float | None = None
    lexicon_size: int
    additional_size: int
    additional_precision: float | None = None


class RunReport(BaseModel):
    """Per-epoch records plus the final choice of a run."""

    strategy: Strategy
    seed: int
    epochs: list[EpochRecord] = Field(default_factory=list)
    chosen: str = ""
    selection: dict[str, float] = Field(default_factory=dict)
    retrieval: RetrievalMethod | None = None
    p_at_1: float | None = None

    @model_validator(mode="after")
    def _check_epochs(self) -> "RunReport":
        indices = [record.epoch for record in self.epochs]
        if indices != sorted(set(indices)):
            raise ValueError("epoch records must have strictly increasing indices")
        return self

    @computed_field
    @property
    def final_additional_size(self) -> int:
        return self.epochs[-1].additional_size if self.epochs else 0


class LoadSettings(BaseModel):
    """How the embedding files of a run were read and what it wrote besides the map."""

    max_vocab: int | None = Field(DEFAULT_MAX_VOCAB, ge=1)
    normalize: bool = True
    center: bool = False
    save_lexicon: bool = False


class RunManifest(BaseModel):
    """Resolved configuration and provenance of a run directory."""

    config: dict[str, Any]
    load: LoadSettings = Field(default_factory=LoadSettings)
    input_digests: dict[str, str]
    seed: int
    version: str
    phase_seconds: dict[str, float] = Field(default_factory=dict)


class SyntheticInstance(BaseModel):
    """Planted alignment problem with known map and permutation."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    src: EmbeddingSpace
    tgt: EmbeddingSpace
    planted_map: LinearMap
    planted_permutation: np.ndarray
    noise_sigma: float
    anisotropy: float = 0.0
    seed: int
