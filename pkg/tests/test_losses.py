import math

import pytest
import torch
import torch.nn.functional as F

from headcam.errors import ContractError, ShapeError
from headcam.objectives import info_nce_loss, temporal_classification_loss

LN_1_PLUS_E_INV = math.log(1 + math.exp(-1))


class TestTemporalClassificationLoss:
    @pytest.mark.parametrize("n_classes", [2, 10, 100])
    def test_uniform_logits(self, n_classes):
        loss, _ = temporal_classification_loss(torch.zeros(4, n_classes), torch.zeros(4, dtype=torch.long))
        assert float(loss) == pytest.approx(math.log(n_classes), abs=1e-6)

    def test_saturated_logits(self):
        logits = torch.zeros(3, 5)
        class_ids = torch.tensor([0, 2, 4])
        logits[torch.arange(3), class_ids] = 20.0
        loss, accuracy = temporal_classification_loss(logits, class_ids)
        assert float(loss) < 1e-7
        assert float(accuracy) == 1.0

    def test_two_classes(self):
        loss, accuracy = temporal_classification_loss(torch.tensor([[1.0, 0.0]]), torch.tensor([0]))
        assert float(loss) == pytest.approx(LN_1_PLUS_E_INV, abs=1e-6)
        assert float(loss) == pytest.approx(0.3133, abs=1e-4)
        assert float(accuracy) == 1.0

    def test_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            temporal_classification_loss(torch.zeros(4, 3), torch.zeros(5, dtype=torch.long))

    def test_class_id_out_of_range(self):
        with pytest.raises(ContractError):
            temporal_classification_loss(torch.zeros(2, 3), torch.tensor([0, 3]))


class TestInfoNCE:
    def test_indistinguishable_positive(self):
        query = torch.tensor([[1.0, 0.0]])
        queue = torch.tensor([[1.0, 0.0]] * 6)
        loss = info_nce_loss(query, query.clone(), queue, temperature=0.2)
        assert float(loss) == pytest.approx(math.log(7), abs=1e-6)

    def test_single_negative(self):
        query = torch.tensor([[1.0, 0.0]])
        loss = info_nce_loss(query, query.clone(), torch.tensor([[0.0, 1.0]]), temperature=1.0)
        assert float(loss) == pytest.approx(LN_1_PLUS_E_INV, abs=1e-6)

    def test_confident_positive(self):
        query = torch.tensor([[0.0, 1.0]])
        loss = info_nce_loss(query, query.clone(), -query.repeat(4, 1), temperature=0.01)
        assert float(loss) < 1e-6

    def test_non_negative(self):
        generator = torch.Generator().manual_seed(0)
        for _ in range(10):
            query = F.normalize(torch.randn(8, 16, generator=generator), dim=1)
            key = F.normalize(torch.randn(8, 16, generator=generator), dim=1)
            queue = F.normalize(torch.randn(32, 16, generator=generator), dim=1)
            assert float(info_nce_loss(query, key, queue, temperature=0.2)) >= 0.0

    def test_rejects_unnormalized_vectors(self):
        query = torch.tensor([[2.0, 0.0]])
        with pytest.raises(ContractError):
            info_nce_loss(query, torch.tensor([[1.0, 0.0]]), torch.tensor([[0.0, 1.0]]), temperature=0.2)

    def test_dimension_mismatch(self):
        query = torch.tensor([[1.0, 0.0]])
        with pytest.raises(ShapeError):
            info_nce_loss(query, query, torch.tensor([[0.0, 0.0, 1.0]]), temperature=0.2)


class TestGradients:
    def test_temporal_classification_matches_finite_differences(self):
        generator = torch.Generator().manual_seed(1)
        for _ in range(25):
            n, n_classes = (int(v) for v in torch.randint(1, 6, (2,), generator=generator))
            logits = torch.randn(n, n_classes + 1, dtype=torch.float64, generator=generator, requires_grad=True)
            class_ids = torch.randint(0, n_classes + 1, (n,), generator=generator)
            assert torch.autograd.gradcheck(lambda x: temporal_classification_loss(x, class_ids)[0], (logits,),
                                            rtol=1e-3)

    def test_info_nce_matches_finite_differences(self):
        generator = torch.Generator().manual_seed(2)
        for _ in range(25):
            query = torch.randn(3, 4, dtype=torch.float64, generator=generator, requires_grad=True)
            key = torch.randn(3, 4, dtype=torch.float64, generator=generator, requires_grad=True)
            queue = F.normalize(torch.randn(5, 4, dtype=torch.float64, generator=generator), dim=1)

            def loss(q, k):
                return info_nce_loss(F.normalize(q, dim=1), F.normalize(k, dim=1), queue, temperature=0.2)

            assert torch.autograd.gradcheck(loss, (query, key), rtol=1e-3)
