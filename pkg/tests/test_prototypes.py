"""Prototype bank EMA, retrieval rules, and correction algebra."""

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pemv.errors import PrototypeNotReadyError, ShapeError
from pemv.prototypes import PrototypeBank, correct_mediator


def make_bank(momentum=0.9, dim=2):
    return PrototypeBank(num_classes=2, dim=dim, momentum=momentum)


def seeded_bank(momentum=0.9, dim=2):
    bank = make_bank(momentum, dim)
    gen = torch.Generator().manual_seed(0)
    bank.update(torch.randn(2, dim, generator=gen), torch.tensor([0, 1]))
    return bank


class TestUpdate:
    def test_first_batch_initializes_with_class_mean(self):
        bank = make_bank()
        meds = torch.tensor([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0]])
        bank.update(meds, torch.tensor([0, 0, 1]))
        torch.testing.assert_close(bank.prototypes[0], torch.tensor([2.0, 0.0]))
        torch.testing.assert_close(bank.prototypes[1], torch.tensor([0.0, 2.0]))
        assert bank.all_initialized()

    def test_momentum_one_freezes_after_initialization(self):
        bank = seeded_bank(momentum=1.0)
        before = bank.prototypes.clone()
        bank.update(torch.randn(6, 2), torch.tensor([0, 0, 0, 1, 1, 1]))
        assert torch.equal(bank.prototypes, before)

    def test_momentum_zero_tracks_batch_mean_exactly(self):
        bank = seeded_bank(momentum=0.0)
        meds = torch.tensor([[5.0, 1.0], [7.0, 3.0], [-1.0, -2.0]])
        bank.update(meds, torch.tensor([0, 0, 1]))
        torch.testing.assert_close(bank.prototypes[0], torch.tensor([6.0, 2.0]))
        torch.testing.assert_close(bank.prototypes[1], torch.tensor([-1.0, -2.0]))

    def test_one_step_ema_hand_value(self):
        bank = make_bank(momentum=0.9)
        bank.update(torch.tensor([[1.0, 0.0], [0.0, 0.0]]), torch.tensor([0, 1]))
        bank.update(torch.tensor([[0.0, 1.0]]), torch.tensor([0]))
        torch.testing.assert_close(bank.prototypes[0], torch.tensor([0.9, 0.1]))

    def test_absent_class_untouched(self):
        bank = seeded_bank()
        p1 = bank.prototypes[1].clone()
        bank.update(torch.randn(4, 2), torch.zeros(4, dtype=torch.long))
        assert torch.equal(bank.prototypes[1], p1)

    def test_dimension_mismatch(self):
        bank = make_bank(dim=3)
        with pytest.raises(ShapeError):
            bank.update(torch.randn(2, 5), torch.tensor([0, 1]))

    def test_no_gradient_flows_into_bank(self):
        bank = seeded_bank()
        meds = torch.randn(4, 2, requires_grad=True)
        bank.update(meds, torch.tensor([0, 1, 0, 1]))
        assert not bank.prototypes.requires_grad
        assert bank.prototypes.grad_fn is None

    @settings(max_examples=20, deadline=None)
    @given(
        m=st.floats(min_value=0.0, max_value=0.99),
        n=st.integers(min_value=1, max_value=50),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_constant_batch_mean_contracts_geometrically(self, m, n, seed):
        gen = torch.Generator().manual_seed(seed)
        bank = make_bank(momentum=m, dim=4)
        start = torch.randn(2, 4, generator=gen, dtype=torch.float64)
        v = torch.randn(4, generator=gen, dtype=torch.float64)
        bank.prototypes = start.clone()
        bank.initialized.fill_(True)
        batch = v.repeat(2, 1)
        for _ in range(n):
            bank.update(batch, torch.tensor([0, 1]))
        for c in range(2):
            bound = (m**n) * torch.linalg.norm(start[c] - v) + 1e-9
            assert torch.linalg.norm(bank.prototypes[c] - v) <= bound


class TestRetrieve:
    def test_labeled_lookup(self):
        bank = seeded_bank()
        p_same, p_other = bank.retrieve(torch.tensor([1, 0]))
        assert torch.equal(p_same[0], bank.prototypes[1])
        assert torch.equal(p_other[0], bank.prototypes[0])
        assert torch.equal(p_same[1], bank.prototypes[0])

    def test_nearest_by_cosine(self):
        bank = make_bank()
        bank.prototypes = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        bank.initialized.fill_(True)
        p_same, p_other, idx = bank.retrieve_nearest(torch.tensor([[2.0, 0.1]]))
        assert idx.tolist() == [0]
        assert torch.equal(p_same[0], bank.prototypes[0])
        assert torch.equal(p_other[0], bank.prototypes[1])

    def test_query_equal_to_prototype(self):
        bank = make_bank()
        bank.prototypes = torch.tensor([[1.0, 2.0], [-3.0, 1.0]])
        bank.initialized.fill_(True)
        _, _, idx = bank.retrieve_nearest(bank.prototypes[0].unsqueeze(0))
        assert idx.tolist() == [0]

    def test_cosine_tie_resolves_to_class_zero(self):
        bank = make_bank()
        bank.prototypes = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        bank.initialized.fill_(True)
        _, _, idx = bank.retrieve_nearest(torch.tensor([[1.0, 1.0]]))
        assert idx.tolist() == [0]

    def test_uninitialized_bank_mentions_checkpoint(self):
        bank = make_bank()
        with pytest.raises(PrototypeNotReadyError, match="checkpoint"):
            bank.retrieve_nearest(torch.randn(1, 2))
        with pytest.raises(PrototypeNotReadyError):
            bank.retrieve(torch.tensor([0]))


class TestCorrection:
    def test_identity_when_coefficients_zero(self):
        a = torch.randn(3, 4)
        out = correct_mediator(a, torch.randn(3, 4), torch.randn(3, 4), 0.0, 0.0)
        assert out is a  # bit-for-bit, not a copy

    def test_full_alignment_returns_same_prototype(self):
        a = torch.randn(2, 4)
        p_same = torch.randn(2, 4)
        out = correct_mediator(a, p_same, torch.randn(2, 4), 1.0, 0.0)
        torch.testing.assert_close(out, p_same, atol=0, rtol=0)

    def test_hand_example(self):
        out = correct_mediator(
            torch.tensor([1.0, 1.0]), torch.tensor([3.0, 1.0]), torch.tensor([1.0, 3.0]), 0.5, 0.1
        )
        torch.testing.assert_close(out, torch.tensor([2.0, 0.8]))

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            correct_mediator(torch.zeros(2, 4), torch.zeros(2, 3), torch.zeros(2, 4), 0.5, 0.1)

    def test_affine_in_each_argument(self):
        gen = torch.Generator().manual_seed(42)
        for _ in range(100):
            args = [torch.randn(5, generator=gen, dtype=torch.float64) for _ in range(6)]
            a1, a2, ps1, ps2, po1, po2 = args
            alpha = torch.rand((), generator=gen, dtype=torch.float64)
            beta = 1.0 - alpha
            ga, gc = 0.37, 0.21

            def f(a, ps, po):
                return correct_mediator(a, ps, po, ga, gc)

            combos = [
                (f(alpha * a1 + beta * a2, ps1, po1), alpha * f(a1, ps1, po1) + beta * f(a2, ps1, po1)),
                (f(a1, alpha * ps1 + beta * ps2, po1), alpha * f(a1, ps1, po1) + beta * f(a1, ps2, po1)),
                (f(a1, ps1, alpha * po1 + beta * po2), alpha * f(a1, ps1, po1) + beta * f(a1, ps1, po2)),
            ]
            for got, want in combos:
                torch.testing.assert_close(got, want, atol=1e-6, rtol=0)
