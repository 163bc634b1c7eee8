"""Test batch sampling, the transport step and the unsupervised aligner."""

import numpy as np
import pytest
from pydantic import ValidationError

from otlex.errors import DivergenceError
from otlex.linalg import unit_rows
from otlex.models import (
    EmbeddingSpace,
    GradientForm,
    LinearMap,
    PriorPlan,
    TransportCost,
    UnsupConfig,
)
from otlex.ot_core import boltzmann_prior, cost_rcsls
from otlex.synth import generate, random_rotation
from otlex.unsupervised import (
    UnsupervisedAligner,
    sample_batch,
    sample_indices,
    solve_plan,
    train_unsupervised,
    transport_costs,
    transport_gradient,
    transport_objective,
    unsup_step,
)


def _space(matrix: np.ndarray) -> EmbeddingSpace:
    return EmbeddingSpace(words=[f"w{i}" for i in range(len(matrix))], matrix=matrix)


def _small_rotation(d: int, angle: float) -> np.ndarray:
    """Rotation by ``angle`` in the plane of the first two axes."""
    r = np.eye(d)
    r[:2, :2] = [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
    return r


class TestSampling:
    """Test batch sampling."""

    def test_full_batch_is_a_permutation(self, rng):
        cfg = UnsupConfig(batch_size=10, sample_pool=10)

        indices = sample_indices(25, cfg, rng)

        np.testing.assert_array_equal(np.sort(indices), np.arange(10))

    def test_same_generator_state_same_batch(self):
        space = _space(np.arange(40.0).reshape(20, 2))
        cfg = UnsupConfig(batch_size=5, sample_pool=20)

        first = sample_batch(space, cfg, np.random.default_rng(4))
        second = sample_batch(space, cfg, np.random.default_rng(4))

        np.testing.assert_array_equal(first, second)

    def test_draws_are_uniform(self):
        cfg = UnsupConfig(batch_size=2, sample_pool=4)
        rng = np.random.default_rng(0)

        counts = np.bincount(
            np.concatenate([sample_indices(4, cfg, rng) for _ in range(10000)]),
            minlength=4,
        )

        assert np.abs(counts - 5000).max() < 150

    def test_batch_larger_than_space(self, rng):
        cfg = UnsupConfig(batch_size=8, sample_pool=100)

        with pytest.raises(ValueError, match="exceeds sampling pool 5"):
            sample_indices(5, cfg, rng)

    def test_config_rejects_batch_above_pool(self):
        with pytest.raises(ValidationError):
            UnsupConfig(batch_size=10, sample_pool=5)


class TestTransportStep:
    """Test a single Wasserstein-Procrustes step."""

    def test_planted_rotation_is_a_fixed_point(self, rng):
        xb = random_rotation(8, rng)
        r = random_rotation(8, rng)
        yb = xb @ r
        q = LinearMap(matrix=r, orthogonal=True)
        prior = boltzmann_prior(cost_rcsls(xb, yb, q, k=1), temperature=0.1)

        updated = unsup_step(q, xb, yb, prior, UnsupConfig())

        assert np.linalg.norm(updated.matrix - r) < 1e-6

    def test_zero_learning_rate_keeps_map(self, rng):
        xb = unit_rows(rng.standard_normal((20, 4)))
        yb = unit_rows(rng.standard_normal((20, 4)))
        q = LinearMap(matrix=random_rotation(4, rng), orthogonal=True)
        cfg = UnsupConfig(learning_rate=0.0, batch_size=20, sample_pool=20)

        updated = unsup_step(q, xb, yb, None, cfg)

        assert np.abs(updated.matrix - q.matrix).max() < 1e-10

    @pytest.mark.parametrize(
        "transport_cost", [TransportCost.SQ_EUCLIDEAN, TransportCost.RCSLS]
    )
    def test_gradient_matches_finite_differences(self, rng, transport_cost):
        h = 1e-5
        xb = unit_rows(rng.standard_normal((12, 4)))
        yb = unit_rows(rng.standard_normal((12, 4)))
        q = LinearMap(matrix=random_rotation(4, rng) + 0.1 * rng.standard_normal((4, 4)))
        cfg = UnsupConfig(
            batch_size=12,
            sample_pool=12,
            prior_k=3,
            transport_cost=transport_cost,
            gradient=GradientForm.EUCLIDEAN,
        )
        plan = solve_plan(transport_costs(q, xb, yb, cfg), None, cfg).values

        def objective(matrix: np.ndarray) -> float:
            return float(np.sum(transport_costs(LinearMap(matrix=matrix), xb, yb, cfg).values * plan))

        grad = transport_gradient(q, xb, yb, plan, cfg)

        numeric = np.zeros((4, 4))
        for a in range(4):
            for b in range(4):
                step = np.zeros((4, 4))
                step[a, b] = h
                numeric[a, b] = (objective(q.matrix + step) - objective(q.matrix - step)) / (2 * h)
        assert np.linalg.norm(numeric - grad) / np.linalg.norm(grad) < 1e-4

    def test_step_stays_orthogonal(self, rng):
        xb = unit_rows(rng.standard_normal((30, 6)))
        yb = unit_rows(rng.standard_normal((30, 6)))
        cfg = UnsupConfig(batch_size=30, sample_pool=30)

        updated = unsup_step(LinearMap.identity(6), xb, yb, None, cfg)

        assert updated.orthogonal
        assert np.abs(updated.matrix.T @ updated.matrix - np.eye(6)).max() < 1e-6

    def test_uniform_prior_matches_plain_transport(self, rng):
        xb = unit_rows(rng.standard_normal((16, 4)))
        yb = unit_rows(rng.standard_normal((16, 4)))
        q = LinearMap(matrix=random_rotation(4, rng), orthogonal=True)
        cfg = UnsupConfig(batch_size=16, sample_pool=16, epsilon=0.05, varepsilon=0.05)

        with_prior = unsup_step(q, xb, yb, PriorPlan.uniform(16, 16), cfg)
        plain = unsup_step(q, xb, yb, None, cfg)

        assert np.abs(with_prior.matrix - plain.matrix).max() <= 1e-8


class TestUnsupervisedAligner:
    """Test UnsupervisedAligner functionality."""

    def test_moves_toward_planted_rotation(self, planted_instance):
        inst = planted_instance
        r = inst.planted_map.matrix
        init = LinearMap(matrix=r @ _small_rotation(8, 0.1), orthogonal=True)
        cfg = UnsupConfig(batch_size=200, sample_pool=200, iters_per_epoch=10)

        q = train_unsupervised(inst.src, inst.tgt, init, None, cfg, seed=0)

        assert np.linalg.norm(q.matrix - r) < np.linalg.norm(init.matrix - r)

    def test_prior_from_planted_map_converges(self):
        inst = generate(n=500, d=8, seed=11)
        r = inst.planted_map
        cfg = UnsupConfig(batch_size=500, sample_pool=500, iters_per_epoch=10)

        q = train_unsupervised(inst.src, inst.tgt, LinearMap.identity(8), r, cfg, seed=0)

        assert np.linalg.norm(q.matrix - r.matrix) < 0.1

    def test_same_seed_is_bitwise_reproducible(self):
        inst = generate(n=60, d=4, noise_sigma=0.05, seed=2)
        cfg = UnsupConfig(batch_size=30, sample_pool=60, iters_per_epoch=3)

        first = train_unsupervised(inst.src, inst.tgt, LinearMap.identity(4), None, cfg, seed=5)
        second = train_unsupervised(inst.src, inst.tgt, LinearMap.identity(4), None, cfg, seed=5)

        np.testing.assert_array_equal(first.matrix, second.matrix)

    def test_held_out_objective_trends_down(self, planted_instance):
        inst = planted_instance
        r = inst.planted_map.matrix
        cfg = UnsupConfig(batch_size=200, sample_pool=200, iters_per_epoch=1, learning_rate=20.0)
        aligner = UnsupervisedAligner(inst.src, inst.tgt, cfg)
        q = LinearMap(matrix=r @ _small_rotation(8, 0.5), orthogonal=True)
        objectives = [transport_objective(q, inst.src.matrix, inst.tgt.matrix, cfg.epsilon)]

        for step in range(5):
            q = aligner.fit(q, seed=step)
            objectives.append(transport_objective(q, inst.src.matrix, inst.tgt.matrix, cfg.epsilon))

        slope = np.polyfit(np.arange(len(objectives)), objectives, 1)[0]
        assert slope <= 0
        assert len(aligner.history) == 5
        assert aligner.last_objective == aligner.history[-1]

    def test_transport_objective_is_zero_at_planted_map(self, planted_instance):
        inst = planted_instance
        rows = inst.src.matrix
        targets = rows @ inst.planted_map.matrix

        objective = transport_objective(inst.planted_map, rows, targets, 0.01)

        assert 0.0 <= objective < 1e-3

    @pytest.mark.parametrize("scale", [np.inf, 1e308])
    def test_overflowing_prior_source_is_divergence(self, planted_instance, scale):
        inst = planted_instance
        cfg = UnsupConfig(batch_size=50, sample_pool=200, iters_per_epoch=1, prior_k=5)
        overflowed = LinearMap(matrix=np.full((8, 8), scale))
        aligner = UnsupervisedAligner(inst.src, inst.tgt, cfg)

        with pytest.raises(DivergenceError, match="supervised learning rate"):
            aligner.fit(LinearMap.identity(8), prior_source=overflowed, seed=0)
