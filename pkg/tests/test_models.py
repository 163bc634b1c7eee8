"""Test data models."""

import numpy as np
import pytest
from pydantic import ValidationError

from otlex.models import (
    EmbeddingSpace,
    EpochRecord,
    Lexicon,
    LexiconPair,
    LinearMap,
    Normalization,
    Origin,
    RunReport,
    ScoredPair,
    Strategy,
    TransportPlan,
)


class TestEmbeddingSpace:
    """Test EmbeddingSpace model."""

    def test_lookup(self, cat_dog_space):
        """Test word lookup and the top-rows pool."""
        assert cat_dog_space.index_of("dog") == 1
        assert cat_dog_space.index_of("wolf") is None
        assert "cat" in cat_dog_space
        assert cat_dog_space.top(1).shape == (1, 3)
        assert cat_dog_space.top(10).shape == (2, 3)

    def test_matrix_is_read_only(self, cat_dog_space):
        """Test that the stored matrix cannot be modified in place."""
        with pytest.raises(ValueError):
            cat_dog_space.matrix[0, 0] = 5.0

    def test_duplicate_words_rejected(self):
        """Test vocabulary uniqueness."""
        with pytest.raises(ValidationError, match="duplicate"):
            EmbeddingSpace(words=["a", "a"], matrix=np.eye(2))

    def test_unit_flag_checked(self):
        """Test that the unit flag requires unit rows."""
        with pytest.raises(ValidationError, match="unit"):
            EmbeddingSpace(words=["a"], matrix=[[2.0, 0.0]], normalized=Normalization.UNIT)


class TestLexicon:
    """Test Lexicon model."""

    def test_from_pairs_drops_repeats(self):
        """Test deduplication keeps first occurrences in order."""
        lexicon = Lexicon.from_pairs([(1, 2), (0, 0), (1, 2), (1, 3)])

        assert [p.key for p in lexicon.pairs] == [(1, 2), (0, 0), (1, 3)]
        assert lexicon.by_source() == {1: {2, 3}, 0: {0}}

    def test_duplicates_rejected(self):
        """Test that direct construction refuses duplicate pairs."""
        pair = LexiconPair(src=0, tgt=0)

        with pytest.raises(ValidationError, match="duplicate"):
            Lexicon(pairs=[pair, pair])

    def test_extended_keeps_annotated_first(self):
        """Test that extension appends only new pairs."""
        annotated = Lexicon.from_pairs([(0, 0)])
        extra = [
            LexiconPair(src=0, tgt=0, origin=Origin.ADDITIONAL),
            LexiconPair(src=1, tgt=1, origin=Origin.ADDITIONAL),
        ]

        extended = annotated.extended(extra)

        assert [p.origin for p in extended.pairs] == [Origin.ANNOTATED, Origin.ADDITIONAL]
        assert len(extended.with_origin(Origin.ADDITIONAL)) == 1

    def test_bounds(self):
        lexicon = Lexicon.from_pairs([(0, 4)])

        with pytest.raises(IndexError):
            lexicon.check_bounds(2, 4)


class TestLinearMap:
    """Test LinearMap model."""

    def test_orthogonal_flag_checked(self):
        """Test that a non-orthogonal matrix cannot claim orthogonality."""
        with pytest.raises(ValidationError, match="orthogonal"):
            LinearMap(matrix=2.0 * np.eye(2), orthogonal=True)

    def test_square_required(self):
        with pytest.raises(ValidationError, match="square"):
            LinearMap(matrix=np.ones((2, 3)))

    def test_projection(self, rng):
        """Test projection onto the nearest orthogonal map."""
        q = LinearMap(matrix=rng.standard_normal((4, 4)))

        projected = q.project_orthogonal()

        assert projected.orthogonal
        assert projected.project_orthogonal() is projected
        np.testing.assert_allclose(projected.backward(), projected.matrix.T)

    def test_matrix_is_copied(self):
        source = np.eye(2)
        q = LinearMap(matrix=source)

        source[0, 0] = 3.0

        assert q.matrix[0, 0] == 1.0


class TestPlansAndScores:
    """Test TransportPlan and ScoredPair models."""

    def test_negative_plan_rejected(self):
        with pytest.raises(ValidationError, match="negative"):
            TransportPlan(values=[[-0.1, 1.1]], violation=0.0, iterations=1, converged=True)

    def test_scored_pair_total(self):
        """Test that the total is the sum of both margins."""
        pair = ScoredPair.build(0, 1, 0.25, 0.5)

        assert pair.cs_total == 0.75
        with pytest.raises(ValidationError, match="cs_total"):
            ScoredPair(src_index=0, tgt_index=1, cs_forward=0.25, cs_backward=0.5, cs_total=1.0)


class TestRunReport:
    """Test RunReport model."""

    def test_final_additional_size(self):
        report = RunReport(
            strategy=Strategy.CSS,
            seed=0,
            epochs=[
                EpochRecord(epoch=0, lexicon_size=12, additional_size=2),
                EpochRecord(epoch=1, lexicon_size=15, additional_size=5),
            ],
        )

        assert report.final_additional_size == 5
        assert report.model_dump()["final_additional_size"] == 5

    def test_epochs_must_increase(self):
        """Test that epoch indices are strictly increasing."""
        record = EpochRecord(epoch=0, lexicon_size=1, additional_size=0)

        with pytest.raises(ValidationError, match="increasing"):
            RunReport(strategy=Strategy.PSS, seed=0, epochs=[record, record])
