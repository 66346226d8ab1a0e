"""Graph attention, top-k node pooling, and node/feature projections.

Graphs are dense tensors ``[batch, features, nodes]`` over a fully connected
edge set including self-loops, so attention needs no adjacency structure.
"""

from __future__ import annotations

from fractions import Fraction

import torch
import torch.nn as nn

from .errors import ShapeError, ValidationError


def round_half_up_count(ratio: float, n_nodes: int) -> int:
    """Number of nodes kept by pooling: round-half-up(ratio * n), minimum 1.

    Ratios are interpreted as the decimals they were written as (via
    ``Fraction(str(ratio))``) so counts do not wobble with float rounding.
    """
    if not 0 < ratio <= 1:
        raise ValidationError(f"pool ratio must be in (0, 1], got {ratio}")
    exact = Fraction(str(ratio)) * n_nodes
    return max(1, int(exact + Fraction(1, 2)))


class GraphAttentionLayer(nn.Module):
    """Self-attention over all node pairs with an element-wise product score.

    The pair score is a learned vector dotted with the element-wise product
    of the two node features; scores are softmax-normalized over the
    neighborhood (all nodes, self included).  Aggregated messages get a
    residual add, batch norm over the feature axis, SeLU, then a linear map
    to the output feature size.
    """

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.att_weight = nn.Parameter(torch.randn(in_dim) / in_dim ** 0.5)
        self.bn = nn.BatchNorm1d(in_dim)
        self.out = nn.Linear(in_dim, out_dim)

    def attention(self, h: torch.Tensor) -> torch.Tensor:
        """Attention matrix [B, N, N]; entry (u, n) weighs node u for target n.

        Every column sums to one.
        """
        if h.ndim != 3 or h.shape[1] != self.in_dim:
            raise ShapeError("graph features", ("B", self.in_dim, "N"), h.shape)
        hw = h * self.att_weight.view(1, -1, 1)
        logits = torch.einsum("bdu,bdn->bun", hw, h)
        return torch.softmax(logits, dim=1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        alpha = self.attention(h)
        messages = torch.einsum("bdu,bun->bdn", h, alpha)
        o = torch.selu(self.bn(messages + h))
        return self.out(o.transpose(1, 2)).transpose(1, 2)


class TopKGraphPool(nn.Module):
    """Keep the highest-scoring round-half-up(ratio * N) nodes, in input order.

    Node scores are the sigmoid of a learned linear projection; kept node
    features are gated by their scores so the scorer receives gradient.
    """

    def __init__(self, in_dim: int, ratio: float):
        super().__init__()
        self.ratio = ratio
        self.score = nn.Linear(in_dim, 1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        n_nodes = h.shape[2]
        keep = round_half_up_count(self.ratio, n_nodes)
        scores = torch.sigmoid(self.score(h.transpose(1, 2)).squeeze(-1))  # (B, N)
        order = torch.argsort(scores, dim=1, descending=True, stable=True)
        idx = order[:, :keep].sort(dim=1).values
        gathered = torch.gather(h, 2, idx.unsqueeze(1).expand(-1, h.shape[1], -1))
        gates = torch.gather(scores, 1, idx).unsqueeze(1)
        return gathered * gates


class GraphProjection(nn.Module):
    """Affine map along either the node axis or the feature axis."""

    def __init__(self, in_size: int, out_size: int, axis: str = "nodes"):
        super().__init__()
        if axis not in ("nodes", "features"):
            raise ValidationError(f"axis must be 'nodes' or 'features', got {axis!r}")
        self.axis = axis
        self.in_size = in_size
        self.proj = nn.Linear(in_size, out_size)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        size = h.shape[2] if self.axis == "nodes" else h.shape[1]
        if size != self.in_size:
            raise ShapeError(f"projection input ({self.axis})",
                             (h.shape[0], h.shape[1] if self.axis == "nodes" else self.in_size,
                              self.in_size if self.axis == "nodes" else h.shape[2]),
                             h.shape)
        if self.axis == "nodes":
            return self.proj(h)
        return self.proj(h.transpose(1, 2)).transpose(1, 2)
