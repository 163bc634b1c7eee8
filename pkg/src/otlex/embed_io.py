"""Readers and writers for embedding files, lexicon files and map files."""

import logging
import struct
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmbeddingFormatError,
    LexiconFormatError,
    MapFormatError,
)
from .linalg import unit_rows
from .models import (
    DEFAULT_MAX_VOCAB,
    EmbeddingSpace,
    Lexicon,
    LexiconPair,
    LinearMap,
    Normalization,
    Origin,
    Side,
)

logger = logging.getLogger(__name__)

MAP_MAGIC = b"OTLX"
MAP_VERSION = 1
# magic, d, orthogonal flag, format version, 5 pad bytes
MAP_HEADER = struct.Struct("<4sIBH5x")


class EmbeddingParser:
    """Parses word2vec/fastText text vector files."""

    def __init__(
        self,
        max_vocab: int | None = DEFAULT_MAX_VOCAB,
        normalize: bool = True,
        center: bool = False,
    ):
        """Initialize parser with truncation and preprocessing options."""
        if max_vocab is not None and max_vocab < 1:
            raise ValueError(f"max_vocab must be positive, got {max_vocab}")
        self.max_vocab = max_vocab
        self.normalize = normalize
        self.center = center
        self.duplicates_skipped = 0

    def parse(self, path: Path) -> EmbeddingSpace:
        """Read ``path`` and return the (optionally normalized) space."""
        self.duplicates_skipped = 0
        words: list[str] = []
        rows: list[np.ndarray] = []
        seen: set[str] = set()

        with open(path, encoding="utf-8") as f:
            count, dim = self._parse_header(f.readline(), path)
            limit = count if self.max_vocab is None else min(count, self.max_vocab)

            for line_no, line in enumerate(f, start=2):
                if len(words) >= limit:
                    break
                if not line.strip():
                    continue
                token, values = self._parse_row(line, dim, line_no, path)
                if token in seen:
                    self.duplicates_skipped += 1
                    continue
                seen.add(token)
                words.append(token)
                rows.append(values)

        if self.duplicates_skipped:
            logger.warning(
                "Skipped %d duplicate tokens in %s", self.duplicates_skipped, path
            )
        if not words:
            raise EmbeddingFormatError(f"{path}: no embedding rows")

        matrix = np.vstack(rows)
        return self._preprocess(words, matrix, path)

    def _parse_header(self, header: str, path: Path) -> tuple[int, int]:
        """Extract "<count> <dim>" from the first line."""
        if not header:
            raise EmbeddingFormatError(f"{path}: empty file")
        fields = header.split()
        if len(fields) != 2 or not all(f.isdigit() for f in fields):
            raise EmbeddingFormatError(f"{path}: malformed header {header.strip()!r}")
        count, dim = int(fields[0]), int(fields[1])
        if dim == 0:
            raise EmbeddingFormatError(f"{path}: header declares dimension 0")
        return count, dim

    def _parse_row(
        self, line: str, dim: int, line_no: int, path: Path
    ) -> tuple[str, np.ndarray]:
        """Split a row into its token (text before the first space) and vector."""
        token, _, rest = line.rstrip("\r\n").partition(" ")
        fields = rest.split()
        if len(fields) != dim:
            raise EmbeddingFormatError(
                f"{path}:{line_no}: expected {dim} values, found {len(fields)}"
            )
        try:
            values = np.asarray(fields, dtype=np.float64)
        except ValueError as exc:
            raise EmbeddingFormatError(f"{path}:{line_no}: {exc}") from exc
        return token, values

    def _preprocess(
        self, words: list[str], matrix: np.ndarray, path: Path
    ) -> EmbeddingSpace:
        if self.center:
            matrix = matrix - matrix.mean(axis=0, keepdims=True)
        if not self.normalize:
            return EmbeddingSpace(words=words, matrix=matrix)

        zero_rows = np.flatnonzero(np.linalg.norm(matrix, axis=1) == 0)
        if zero_rows.size:
            raise EmbeddingFormatError(
                f"{path}: zero-norm row for token {words[zero_rows[0]]!r}"
            )
        return EmbeddingSpace(
            words=words, matrix=unit_rows(matrix), normalized=Normalization.UNIT
        )


class LexiconParser:
    """Parses "<src_token> <tgt_token>" dictionary files against two spaces."""

    def __init__(self, src: EmbeddingSpace, tgt: EmbeddingSpace):
        self.src = src
        self.tgt = tgt
        self.skipped_oov = 0

    def parse(self, path: Path) -> Lexicon:
        """Keep in-vocabulary pairs in file order, deduplicated."""
        self.skipped_oov = 0
        pairs: list[LexiconPair] = []
        seen: set[tuple[int, int]] = set()

        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                fields = line.split()
                if not fields:
                    continue
                if len(fields) < 2:
                    raise LexiconFormatError(
                        f"{path}:{line_no}: expected two tokens, got {line.strip()!r}"
                    )
                src = self.src.index_of(fields[0])
                tgt = self.tgt.index_of(fields[1])
                if src is None or tgt is None:
                    self.skipped_oov += 1
                    continue
                if (src, tgt) in seen:
                    continue
                seen.add((src, tgt))
                pairs.append(
                    LexiconPair(src=src, tgt=tgt, origin=self._origin(fields))
                )

        if self.skipped_oov:
            logger.warning(
                "Skipped %d out-of-vocabulary lexicon lines in %s",
                self.skipped_oov,
                path,
            )
        return Lexicon(pairs=pairs)

    @staticmethod
    def _origin(fields: list[str]) -> Origin:
        """Read the optional origin sidecar column."""
        if len(fields) >= 3 and fields[2] in {origin.value for origin in Origin}:
            return Origin(fields[2])
        return Origin.ANNOTATED


def load_embeddings(
    path: Path,
    max_vocab: int | None = DEFAULT_MAX_VOCAB,
    normalize: bool = True,
    center: bool = False,
) -> EmbeddingSpace:
    """Load a text embedding file; see :class:`EmbeddingParser`."""
    return EmbeddingParser(max_vocab=max_vocab, normalize=normalize, center=center).parse(
        path
    )


def save_embeddings(space: EmbeddingSpace, path: Path) -> None:
    """Write ``space`` as a text vector file with a "<count> <dim>" header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{space.size} {space.dim}\n")
        for word, row in zip(space.words, space.matrix, strict=True):
            f.write(word + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_lexicon(path: Path, src: EmbeddingSpace, tgt: EmbeddingSpace) -> Lexicon:
    """Load a dictionary file; see :class:`LexiconParser`."""
    return LexiconParser(src, tgt).parse(path)


def save_lexicon(
    lexicon: Lexicon,
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    path: Path,
    with_origin: bool = False,
) -> None:
    """Write one "src_token tgt_token" line per pair, in pair order."""
    with open(path, "w", encoding="utf-8") as f:
        for pair in lexicon.pairs:
            line = f"{src.words[pair.src]} {tgt.words[pair.tgt]}"
            if with_origin:
                line += f" {pair.origin.value}"
            f.write(line + "\n")


def subset_rows(space: EmbeddingSpace, lexicon: Lexicon, side: Side) -> np.ndarray:
    """Stack the embedding of each pair's index on ``side`` (rows may repeat)."""
    indices = lexicon.src_indices if side is Side.SOURCE else lexicon.tgt_indices
    if indices.size and indices.max() >= space.size:
        raise IndexError(f"lexicon index {indices.max()} outside space of size {space.size}")
    return space.matrix[indices]


def save_map(linear_map: LinearMap, path: Path) -> None:
    """Write ``linear_map`` as a little-endian binary map file."""
    header = MAP_HEADER.pack(
        MAP_MAGIC, linear_map.dim, int(linear_map.orthogonal), MAP_VERSION
    )
    body = np.ascontiguousarray(linear_map.matrix, dtype="<f8").tobytes(order="C")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + body)


def load_map(path: Path, expected_dim: int | None = None) -> LinearMap:
    """Read a map file written by :func:`save_map`."""
    data = path.read_bytes()
    if len(data) < MAP_HEADER.size:
        raise MapFormatError(f"{path}: truncated header")
    magic, dim, orthogonal, version = MAP_HEADER.unpack_from(data)
    if magic != MAP_MAGIC:
        raise MapFormatError(f"{path}: bad magic {magic!r}")
    if version != MAP_VERSION:
        raise MapFormatError(f"{path}: unsupported map version {version}")
    if len(data) != MAP_HEADER.size + 8 * dim * dim:
        raise MapFormatError(f"{path}: body size does not match d={dim}")
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(
            f"{path}: map has d={dim} but embeddings have d={expected_dim}"
        )
    matrix = np.frombuffer(data, dtype="<f8", offset=MAP_HEADER.size).reshape(dim, dim)
    return LinearMap(matrix=matrix, orthogonal=bool(orthogonal))
