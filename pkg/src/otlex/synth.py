"""Planted synthetic alignment problems with a known rotation and permutation."""

import logging
from pathlib import Path

import numpy as np

from .embed_io import save_embeddings, save_lexicon, save_map
from .linalg import unit_rows
from .models import (
    EmbeddingSpace,
    Lexicon,
    LinearMap,
    Normalization,
    SyntheticInstance,
)

logger = logging.getLogger(__name__)


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR with the sign of R's diagonal fixed)."""
    q, upper = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(upper))


def generate(
    n: int,
    d: int,
    noise_sigma: float = 0.0,
    seed: int = 0,
    anisotropy: float = 0.0,
) -> SyntheticInstance:
    """Gaussian source cloud and its rotated, permuted, noisy target copy.

    Target row ``pi[i]`` is source row ``i`` rotated by R, optionally stretched
    along the target axes by ``exp(anisotropy * t)`` for ``t`` in [-1, 1],
    perturbed by Gaussian noise and unit-normalized.
    """
    if d < 2 or n < d:
        raise ValueError(f"need n >= d >= 2, got n={n}, d={d}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")

    rng = np.random.default_rng(seed)
    src = unit_rows(rng.standard_normal((n, d)))
    rotation = random_rotation(d, rng)
    permutation = rng.permutation(n)
    noise = rng.standard_normal((n, d))

    mapped = src @ rotation
    if anisotropy:
        mapped = mapped * np.exp(anisotropy * np.linspace(-1.0, 1.0, d))
    tgt = np.empty_like(mapped)
    tgt[permutation] = unit_rows(mapped + noise_sigma * noise)

    return SyntheticInstance(
        src=EmbeddingSpace(
            words=[f"s{i}" for i in range(n)],
            matrix=src,
            normalized=Normalization.UNIT,
        ),
        tgt=EmbeddingSpace(
            words=[f"t{j}" for j in range(n)],
            matrix=tgt,
            normalized=Normalization.UNIT,
        ),
        planted_map=LinearMap(matrix=rotation, orthogonal=True),
        planted_permutation=permutation,
        noise_sigma=noise_sigma,
        anisotropy=anisotropy,
        seed=seed,
    )


def gold_lexicon(inst: SyntheticInstance, size: int, seed: int = 0) -> Lexicon:
    """``size`` planted pairs ``(i, pi[i])`` sampled without replacement."""
    n = inst.src.size
    if not 0 <= size <= n:
        raise ValueError(f"lexicon size {size} outside [0, {n}]")
    sources = np.random.default_rng(seed).choice(n, size=size, replace=False)
    return Lexicon.from_pairs((i, inst.planted_permutation[i]) for i in sources)


def full_lexicon(inst: SyntheticInstance) -> Lexicon:
    """The whole planted correspondence in source order."""
    return Lexicon.from_pairs(enumerate(inst.planted_permutation))


def train_test_split(
    inst: SyntheticInstance, train_size: int, test_size: int, seed: int = 0
) -> tuple[Lexicon, Lexicon]:
    """Two planted lexicons with disjoint source words."""
    n = inst.src.size
    if train_size < 0 or test_size < 0 or train_size + test_size > n:
        raise ValueError(
            f"train {train_size} + test {test_size} pairs exceed {n} source words"
        )
    sources = np.random.default_rng(seed).choice(
        n, size=train_size + test_size, replace=False
    )
    perm = inst.planted_permutation
    return (
        Lexicon.from_pairs((i, perm[i]) for i in sources[:train_size]),
        Lexicon.from_pairs((i, perm[i]) for i in sources[train_size:]),
    )


def save_instance(
    inst: SyntheticInstance,
    directory: Path,
    lexicons: dict[str, Lexicon] | None = None,
) -> dict[str, Path]:
    """Write the spaces, the planted map and gold lexicons under ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "src": directory / "src.vec",
        "tgt": directory / "tgt.vec",
        "map": directory / "planted.map",
        "gold": directory / "gold.txt",
    }
    save_embeddings(inst.src, paths["src"])
    save_embeddings(inst.tgt, paths["tgt"])
    save_map(inst.planted_map, paths["map"])
    save_lexicon(full_lexicon(inst), inst.src, inst.tgt, paths["gold"])
    for name, lexicon in (lexicons or {}).items():
        paths[name] = directory / f"{name}.txt"
        save_lexicon(lexicon, inst.src, inst.tgt, paths[name])
    logger.info("Wrote synthetic instance (n=%d, d=%d) to %s", inst.src.size, inst.src.dim, directory)
    return paths
