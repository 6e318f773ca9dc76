"""Objective terms: hand values, limit conventions, gradients, invariances."""

import math

import pytest
import torch
import torch.nn as nn
from hypothesis import given, settings
from hypothesis import strategies as st

from pemv.config import LossConfig
from pemv.errors import ShapeError
from pemv.losses import classification_loss, fusion_loss, information_purity, total_loss


class TestClassification:
    def test_uniform_logits_give_ln2(self):
        logits = torch.zeros(5, 2, dtype=torch.float64)
        labels = torch.tensor([0, 1, 0, 1, 1])
        assert abs(classification_loss(logits, labels).item() - math.log(2)) <= 1e-9

    def test_confident_correct_prediction_drives_loss_to_zero(self):
        labels = torch.tensor([0])
        for margin, bound in ((10.0, 1e-3), (30.0, 1e-12), (80.0, 1e-30)):
            logits = torch.tensor([[margin, 0.0]], dtype=torch.float64)
            assert classification_loss(logits, labels).item() <= bound

    def test_hand_batch_of_two(self):
        # independent derivation of the two-sample cross-entropy
        p0 = math.exp(2) / (math.exp(2) + 1)
        p1 = math.exp(1) / (math.exp(1) + 1)
        expected = 0.5 * (-math.log(p0) - math.log(p1))
        logits = torch.tensor([[2.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        got = classification_loss(logits, torch.tensor([0, 1])).item()
        assert abs(got - expected) <= 1e-12
        assert abs(got - 0.2200948) <= 1e-6

    def test_empty_batch_rejected(self):
        with pytest.raises(ShapeError):
            classification_loss(torch.zeros(0, 2), torch.zeros(0, dtype=torch.long))

    def test_nonfinite_logits_rejected(self):
        with pytest.raises(ShapeError):
            classification_loss(torch.tensor([[float("inf"), 0.0]]), torch.tensor([0]))


def make_head(d_g, d_a, seed=0, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    head = nn.Linear(d_g + d_a, 2).to(dtype)
    with torch.no_grad():
        head.weight.copy_(torch.randn(2, d_g + d_a, generator=gen, dtype=dtype))
        head.bias.copy_(torch.randn(2, generator=gen, dtype=dtype))
    return head


def rand_inputs(b, d_g, d_a, seed=0, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    return (
        torch.randn(b, d_a, generator=gen, dtype=dtype),
        torch.randn(b, d_a, generator=gen, dtype=dtype),
        torch.randn(b, d_g, generator=gen, dtype=dtype),
        torch.randint(0, 2, (b,), generator=gen),
    )


class TestFusion:
    def test_zero_head_pair_value_is_ln2(self):
        # every q is exactly 0.5, so each pair contributes -2 * 0.5 * ln 0.5 = ln 2
        head = nn.Linear(5, 2).to(torch.float64)
        with torch.no_grad():
            head.weight.zero_()
            head.bias.zero_()
        same, diff, g, labels = rand_inputs(2, 3, 2)
        loss = fusion_loss(same, diff, g, labels, head)
        assert abs(loss.item() - math.log(2)) <= 1e-9

    def test_saturated_probabilities_give_zero_loss(self):
        # head forces class-0 probability to 1 regardless of input: the
        # same-branch reads q=1 (1*log1=0) and for label-1 anchors the
        # diff-branch reads q=0, which must contribute 0 by convention.
        head = nn.Linear(5, 2).to(torch.float64)
        with torch.no_grad():
            head.weight.zero_()
            head.bias.copy_(torch.tensor([2000.0, -2000.0], dtype=torch.float64))
        same, diff, g, _ = rand_inputs(3, 3, 2)
        labels = torch.tensor([0, 1, 0])
        loss = fusion_loss(same, diff, g, labels, head)
        assert loss.item() == 0.0

    def test_identical_samples_equal_single_pair_value(self):
        head = make_head(3, 4, seed=1)
        same, diff, g, labels = rand_inputs(1, 3, 4, seed=2)
        b = 6
        loss = fusion_loss(
            same.repeat(b, 1), diff.repeat(b, 1), g.repeat(b, 1), labels.repeat(b), head
        )
        # single-pair contribution computed straight from the definition
        def q_term(corrected, read_at):
            q = torch.softmax(head(torch.cat([g[0], corrected[0]])), dim=-1)[read_at]
            return (q * torch.log(q)).item()

        expected = -(q_term(same, labels[0]) + q_term(diff, 1 - labels[0]))
        assert abs(loss.item() - expected) <= 1e-12

    def test_batch_of_one_rejected(self):
        head = make_head(3, 4)
        same, diff, g, labels = rand_inputs(1, 3, 4)
        with pytest.raises(ShapeError, match=">= 2"):
            fusion_loss(same, diff, g, labels, head)

    def test_nonnegative(self):
        head = make_head(4, 6, seed=3)
        for seed in range(10):
            same, diff, g, labels = rand_inputs(5, 4, 6, seed=seed)
            assert fusion_loss(same, diff, g, labels, head).item() >= 0.0

    def test_batch_permutation_invariance(self):
        head = make_head(3, 4, seed=4)
        same, diff, g, labels = rand_inputs(8, 3, 4, seed=5)
        base = fusion_loss(same, diff, g, labels, head).item()
        perm = torch.randperm(8, generator=torch.Generator().manual_seed(9))
        permuted = fusion_loss(same[perm], diff[perm], g[perm], labels[perm], head).item()
        assert abs(base - permuted) <= 1e-7

    def test_large_batch_subsampling_is_seed_deterministic(self):
        head = make_head(3, 4, seed=6)
        same, diff, g, labels = rand_inputs(40, 3, 4, seed=7)

        def run(seed):
            gen = torch.Generator().manual_seed(seed)
            return fusion_loss(same, diff, g, labels, head, generator=gen).item()

        assert run(11) == run(11)
        full = fusion_loss(same[:8], diff[:8], g[:8], labels[:8], head).item()
        assert full >= 0.0  # small batches keep full pairing

    def test_gradient_matches_central_finite_differences(self):
        # tiny instance: d_g=3, d_A=4, B=3, double precision
        head = make_head(3, 4, seed=8)
        same, diff, g, labels = rand_inputs(3, 3, 4, seed=9)
        loss = fusion_loss(same, diff, g, labels, head)
        loss.backward()

        h = 1e-6
        for param in head.parameters():
            analytic = param.grad.clone()
            fd = torch.zeros_like(param)
            flat = param.data.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = fusion_loss(same, diff, g, labels, head).item()
                flat[i] = orig - h
                down = fusion_loss(same, diff, g, labels, head).item()
                flat[i] = orig
                fd.view(-1)[i] = (up - down) / (2 * h)
            rel = (analytic - fd).norm() / max(analytic.norm().item(), 1e-12)
            assert rel.item() <= 1e-4


class TestInformationPurity:
    def test_uniform_attention_scores_one(self):
        att = torch.full((2, 3, 4, 4), 1 / 16, dtype=torch.float64)
        assert abs(information_purity(att).item() - 1.0) <= 1e-12

    def test_one_hot_attention_scores_zero(self):
        att = torch.zeros(1, 2, 4, 4, dtype=torch.float64)
        att[:, :, 0, 0] = 1.0
        assert information_purity(att).item() == 0.0

    def test_hand_entropy(self):
        att = torch.tensor([[[[0.5, 1 / 6], [1 / 6, 1 / 6]]]], dtype=torch.float64)
        h = -(0.5 * math.log(0.5) + 3 * (1 / 6) * math.log(1 / 6))
        assert abs(h - 1.2425) <= 5e-5
        expected = h / math.log(4)
        got = information_purity(att).item()
        assert abs(got - expected) <= 1e-12
        assert abs(got - 0.8962) <= 5e-5

    def test_single_cell_grid_defined_as_zero(self):
        att = torch.ones(1, 3, 1, 1)
        assert information_purity(att).item() == 0.0

    @settings(max_examples=30, deadline=None)
    @given(
        k=st.integers(min_value=1, max_value=4),
        hw=st.integers(min_value=2, max_value=5),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_bounded_between_zero_and_one(self, k, hw, seed):
        gen = torch.Generator().manual_seed(seed)
        raw = torch.rand(2, k, hw, hw, generator=gen, dtype=torch.float64) + 1e-6
        att = raw / raw.sum(dim=(2, 3), keepdim=True)
        value = information_purity(att).item()
        assert 0.0 <= value <= 1.0 + 1e-12


class TestTotal:
    def test_reduces_to_classification_loss(self):
        cfg = LossConfig(lambda_f=0.0, mu_ip=0.0)
        lo = torch.tensor(0.437)
        total = total_loss(lo, torch.tensor(9.9), torch.tensor(9.9), cfg)
        assert abs(total.item() - lo.item()) <= 1e-7

    def test_weighted_sum_without_ip(self):
        cfg = LossConfig(lambda_f=1.0, enable_ip=False)
        total = total_loss(torch.tensor(0.5), torch.tensor(0.2), torch.tensor(0.9), cfg)
        assert abs(total.item() - 0.7) <= 1e-7

    def test_weighted_sum_all_terms(self):
        cfg = LossConfig(lambda_f=0.5, mu_ip=0.1)
        total = total_loss(torch.tensor(0.5), torch.tensor(0.2), torch.tensor(0.9), cfg)
        assert abs(total.item() - 0.69) <= 1e-7

    def test_affine_in_lambda_with_slope_lf(self):
        lo, lf, lip = torch.tensor(0.4), torch.tensor(0.3), torch.tensor(0.2)
        for l1, l2 in ((0.0, 1.0), (0.25, 0.75), (1.0, 3.0)):
            t1 = total_loss(lo, lf, lip, LossConfig(lambda_f=l1, enable_ip=False))
            t2 = total_loss(lo, lf, lip, LossConfig(lambda_f=l2, enable_ip=False))
            assert abs((t2 - t1).item() - (l2 - l1) * lf.item()) <= 1e-6

    def test_disabled_terms_drop_out(self):
        cfg = LossConfig(lambda_f=0.5, mu_ip=0.1, enable_lf=False, enable_ip=False)
        total = total_loss(torch.tensor(1.0), torch.tensor(5.0), torch.tensor(5.0), cfg)
        assert total.item() == 1.0
