import numpy as np
import pytest
import torch
import torch.nn.functional as F

from conftest import make_manifest
from headcam.errors import ContractError
from headcam.objectives import (
    MomentumContrast,
    QueueState,
    ReferenceCNN,
    enqueue,
    momentum_update,
    temporal_positive_pairs,
)


def unit_rows(n: int, dim: int = 4, seed: int = 0) -> torch.Tensor:
    return F.normalize(torch.randn(n, dim, generator=torch.Generator().manual_seed(seed)), dim=1)


class TestMomentumUpdate:
    def test_momentum_one_keeps_keys(self):
        key = [torch.zeros(3)]
        momentum_update([torch.ones(3)], key, m=1.0)
        assert torch.equal(key[0], torch.zeros(3))

    def test_momentum_zero_copies_query(self):
        query = [torch.arange(6.0).view(2, 3)]
        key = [torch.zeros(2, 3)]
        momentum_update(query, key, m=0.0)
        assert torch.equal(key[0], query[0])

    def test_arithmetic(self):
        key = [torch.zeros(1, dtype=torch.float64)]
        momentum_update([torch.ones(1, dtype=torch.float64)], key, m=0.999)
        assert float(key[0]) == pytest.approx(0.001, abs=1e-12)

    def test_query_untouched(self):
        query = [torch.ones(2)]
        momentum_update(query, [torch.zeros(2)], m=0.5)
        assert torch.equal(query[0], torch.ones(2))

    def test_contracts_towards_query(self):
        generator = torch.Generator().manual_seed(4)
        for m in torch.rand(20, generator=generator, dtype=torch.float64).tolist():
            query = [torch.randn(3, 5, generator=generator, dtype=torch.float64) for _ in range(2)]
            key = [torch.randn(3, 5, generator=generator, dtype=torch.float64) for _ in range(2)]
            gaps = [(k - q).abs() for k, q in zip(key, query)]
            momentum_update(query, key, m=m)
            for k, q, gap in zip(key, query, gaps):
                np.testing.assert_allclose((k - q).abs().numpy(), m * gap.numpy(), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            momentum_update([torch.ones(2)], [torch.zeros(3)], m=0.5)

    def test_invalid_momentum(self):
        with pytest.raises(ContractError):
            momentum_update([torch.ones(2)], [torch.zeros(2)], m=1.5)


class TestQueue:
    def test_wraparound(self):
        state = QueueState(queue=unit_rows(8), ptr=6)
        keys = unit_rows(4, seed=1)
        enqueue(state, keys)
        assert torch.equal(state.queue[[6, 7, 0, 1]], keys)
        assert state.ptr == 2

    def test_full_batch_replaces_queue(self):
        state = QueueState(queue=unit_rows(8), ptr=3)
        keys = unit_rows(8, seed=1)
        enqueue(state, keys)
        assert state.ptr == 3
        assert torch.equal(state.queue[[3, 4, 5, 6, 7, 0, 1, 2]], keys)

    def test_consecutive_enqueues(self):
        state = QueueState(queue=unit_rows(10), ptr=0)
        enqueue(state, unit_rows(3, seed=1))
        enqueue(state, unit_rows(3, seed=2))
        assert state.ptr == 6 % 10

    def test_batch_larger_than_queue(self):
        with pytest.raises(ContractError):
            enqueue(QueueState(queue=unit_rows(4)), unit_rows(5, seed=1))

    def test_rejects_unnormalized_keys(self):
        with pytest.raises(ContractError):
            enqueue(QueueState(queue=unit_rows(4)), torch.full((2, 4), 3.0))

    def test_pointer_range(self):
        with pytest.raises(ContractError):
            QueueState(queue=unit_rows(4), ptr=4)


class TestMomentumContrast:
    @pytest.fixture
    def model(self):
        torch.manual_seed(0)
        return MomentumContrast(ReferenceCNN(embedding_dim=16, width=8), queue_size=16, proj_dim=8, momentum=0.9,
                                temperature=0.2, seed=0)

    def test_forward_enqueues_keys(self, model):
        images = torch.randn(4, 3, 16, 16)
        loss = model(images, images.clone())
        assert torch.isfinite(loss)
        assert model.queue_state.ptr == 4
        assert all(not param.requires_grad for param in model.encoder_k.parameters())

    def test_gradients_reach_query_encoder_only(self, model):
        images = torch.randn(4, 3, 16, 16)
        model(images, images).backward()
        assert any(param.grad is not None for param in model.encoder_q.parameters())
        assert all(param.grad is None for param in model.encoder_k.parameters())

    def test_state_round_trip(self, model):
        model(torch.randn(4, 3, 16, 16), torch.randn(4, 3, 16, 16))
        state = model.contrastive_state()
        other = MomentumContrast(ReferenceCNN(embedding_dim=16, width=8), queue_size=16, proj_dim=8, seed=1)
        other.load_contrastive_state(state)
        assert torch.equal(other.queue_state.queue, model.queue_state.queue)
        assert other.queue_state.ptr == model.queue_state.ptr


class TestTemporalPairs:
    def test_boundaries(self, rng):
        manifest = make_manifest(5)
        _, positives = temporal_positive_pairs(np.array([0, 4]), manifest, rng)
        np.testing.assert_array_equal(positives, [1, 3])

    def test_interior_neighbours(self, rng):
        manifest = make_manifest(50)
        anchors = np.repeat(np.arange(1, 49), 20)
        _, positives = temporal_positive_pairs(anchors, manifest, rng)
        assert set(np.unique(positives - anchors)) == {-1, 1}

    def test_interior_sides_are_balanced(self, rng):
        n_draws = 10_000
        anchors = rng.integers(1, 49, size=n_draws)
        _, positives = temporal_positive_pairs(anchors, make_manifest(50), rng)
        n_left = int(np.sum(positives - anchors == -1))
        assert abs(n_left - n_draws / 2) <= 3 * np.sqrt(n_draws * 0.25)

    def test_needs_two_frames(self, rng):
        with pytest.raises(ContractError):
            temporal_positive_pairs(np.array([0]), make_manifest(1), rng)

    def test_anchor_out_of_range(self, rng):
        with pytest.raises(ContractError):
            temporal_positive_pairs(np.array([5]), make_manifest(5), rng)


class TestQueueOracle:
    def test_pointer_follows_modular_arithmetic(self, rng):
        for _ in range(1000):
            size = int(rng.integers(1, 12))
            state = QueueState(queue=unit_rows(size), ptr=int(rng.integers(0, size)))
            expected = state.ptr
            for _ in range(int(rng.integers(1, 5))):
                batch = int(rng.integers(0, size + 1))
                enqueue(state, unit_rows(batch, seed=batch) if batch else torch.zeros(0, 4))
                expected = (expected + batch) % size
                assert state.ptr == expected
