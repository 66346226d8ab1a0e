import math
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pytest
import torch

from oracles import check_gradient

from stereospoof.errors import ShapeError, ValidationError
from stereospoof.graph_attention import (GraphAttentionLayer, GraphProjection,
                                         TopKGraphPool, round_half_up_count)


def decimal_round_half_up(ratio, n):
    return max(1, int((Decimal(str(ratio)) * n).quantize(Decimal("1"), rounding=ROUND_HALF_UP)))


class TestAttentionWeights:
    def test_column_sums_one_over_random_graphs(self, rng):
        torch.manual_seed(7)
        for _ in range(100):
            n = int(rng.integers(1, 33))
            d = int(rng.integers(2, 17))
            layer = GraphAttentionLayer(d, d)
            h = torch.from_numpy(rng.normal(0, 2, (1, d, n))).float()
            alpha = layer.attention(h)
            assert torch.allclose(alpha.sum(dim=1), torch.ones(1, n), atol=1e-6)
            assert (alpha > 0).all()

    def test_two_identical_nodes_give_half(self):
        layer = GraphAttentionLayer(4, 4)
        h = torch.ones(1, 4, 2) * 1.7
        alpha = layer.attention(h)
        assert torch.allclose(alpha, torch.full((1, 2, 2), 0.5))

    def test_single_node_self_loop(self):
        layer = GraphAttentionLayer(4, 4)
        alpha = layer.attention(torch.randn(1, 4, 1))
        assert torch.allclose(alpha, torch.ones(1, 1, 1))

    def test_one_hot_features_hand_computed_softmax(self):
        layer = GraphAttentionLayer(3, 3)
        with torch.no_grad():
            layer.att_weight.copy_(torch.ones(3))
        alpha = layer.attention(torch.eye(3).unsqueeze(0))
        e = math.e
        expect_diag = e / (e + 2)
        expect_off = 1 / (e + 2)
        for n in range(3):
            for u in range(3):
                want = expect_diag if u == n else expect_off
                assert abs(alpha[0, u, n].item() - want) < 1e-6


class TestGatForward:
    def test_branch_dims_64_to_32(self):
        layer = GraphAttentionLayer(64, 32)
        assert layer(torch.randn(2, 64, 23)).shape == (2, 32, 23)

    def test_fusion_dims_32_to_16(self):
        layer = GraphAttentionLayer(32, 16)
        assert layer(torch.randn(1, 32, 12)).shape == (1, 16, 12)

    def test_identical_nodes_stay_identical(self):
        layer = GraphAttentionLayer(8, 4).eval()
        h = torch.randn(1, 8, 1).expand(1, 8, 6)
        out = layer(h)
        assert torch.allclose(out, out[:, :, :1].expand_as(out), atol=1e-6)

    def test_node_permutation_equivariance(self):
        layer = GraphAttentionLayer(8, 4).eval()
        h = torch.randn(1, 8, 9)
        perm = torch.randperm(9)
        assert torch.allclose(layer(h)[:, :, perm], layer(h[:, :, perm]), atol=1e-6)

    def test_gradient_of_attention_weight_matches_fd(self, rng):
        torch.manual_seed(1)
        layer = GraphAttentionLayer(6, 3).double().eval()
        h = torch.from_numpy(rng.normal(0, 1, (1, 6, 5))).double()

        def f():
            return layer(h).square().sum()

        check_gradient(f, layer.att_weight, n_probes=5, rng=rng, eps=1e-7, tol=1e-4)

    def test_rejects_wrong_feature_dim(self):
        layer = GraphAttentionLayer(8, 4)
        with pytest.raises(ShapeError):
            layer(torch.randn(1, 7, 5))


class TestGraphPooling:
    def test_table_counts(self):
        assert round_half_up_count(0.6, 23) == 14
        assert round_half_up_count(0.8, 29) == 23
        assert round_half_up_count(0.58, 12) == 7

    @pytest.mark.parametrize("ratio", [0.58, 0.6, 0.8])
    def test_counts_match_decimal_oracle_for_all_sizes(self, ratio):
        for n in range(1, 65):
            assert round_half_up_count(ratio, n) == decimal_round_half_up(ratio, n), (ratio, n)

    def test_pooled_shapes(self):
        pool = TopKGraphPool(32, 0.6)
        assert pool(torch.randn(2, 32, 23)).shape == (2, 32, 14)
        pool = TopKGraphPool(32, 0.8)
        assert pool(torch.randn(2, 32, 29)).shape == (2, 32, 23)
        pool = TopKGraphPool(16, 0.58)
        assert pool(torch.randn(2, 16, 12)).shape == (2, 16, 7)

    def test_minimum_one_node(self):
        pool = TopKGraphPool(4, 0.1)
        assert pool(torch.randn(1, 4, 3)).shape == (1, 4, 1)

    def test_keeps_relative_order_and_gates_by_score(self):
        pool = TopKGraphPool(1, 0.5)
        with torch.no_grad():
            pool.score.weight.copy_(torch.ones(1, 1))
            pool.score.bias.zero_()
        # scores increase with the feature value; top-2 of 4 are nodes 1 and 3
        h = torch.tensor([[[0.5, 3.0, -1.0, 2.0]]])
        out = pool(h)
        expected = torch.tensor([3.0, 2.0]) * torch.sigmoid(torch.tensor([3.0, 2.0]))
        assert torch.allclose(out[0, 0], expected)

    def test_invalid_ratio(self):
        with pytest.raises(ValidationError):
            round_half_up_count(0.0, 5)
        with pytest.raises(ValidationError):
            round_half_up_count(1.5, 5)


class TestProjection:
    def test_node_axis_maps(self):
        proj = GraphProjection(14, 12, axis="nodes")
        assert proj(torch.randn(2, 32, 14)).shape == (2, 32, 12)
        proj = GraphProjection(23, 12, axis="nodes")
        assert proj(torch.randn(2, 32, 23)).shape == (2, 32, 12)

    def test_feature_axis_maps(self):
        proj = GraphProjection(16, 1, axis="features")
        assert proj(torch.randn(2, 16, 7)).shape == (2, 1, 7)

    def test_bad_axis_and_shape(self):
        with pytest.raises(ValidationError):
            GraphProjection(4, 2, axis="time")
        proj = GraphProjection(14, 12, axis="nodes")
        with pytest.raises(ShapeError):
            proj(torch.randn(1, 32, 13))
