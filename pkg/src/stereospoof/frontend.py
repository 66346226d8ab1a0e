"""Raw-waveform encoder: learnable band-pass filterbank plus residual blocks.

One encoder instance processes one channel.  A 64600-sample input follows the
contracted shape pipeline

    64600 -> (70, 64472) -> (1, 23, 21490) -> (32, 23, 2387) -> (64, 23, 29)

and the final feature map is turned into either a spectral graph (one node
per frequency bin) or a temporal graph (one node per frame), with absolute
values applied so no node feature is negative.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError, ValidationError


def frontend_shape_plan(input_length: int, sinc_kernel: int = 129, sinc_filters: int = 70,
                        channels: tuple = (32, 64), blocks: tuple = (2, 4)) -> dict:
    """Compute every intermediate shape of the encoder for a given input length.

    Pooling uses window 3 with floor semantics on both the filter and time
    axes after the 1-D conv, and window (1, 3) after each residual block.
    """
    conv_t = input_length - sinc_kernel + 1
    if conv_t < 3:
        raise ValidationError(f"input length {input_length} too short for kernel {sinc_kernel}")
    freq = sinc_filters // 3
    t = conv_t // 3
    plan = {
        "input": (1, input_length),
        "sinc_conv": (sinc_filters, conv_t),
        "sinc_pooled": (1, freq, t),
        "blocks": [],
    }
    n_blocks = (blocks[0], blocks[1])
    widths = (channels[0], channels[1])
    for width, count in zip(widths, n_blocks):
        for _ in range(count):
            if t < 3:
                raise ValidationError(
                    f"input length {input_length} exhausts the time axis before the last block")
            t = t // 3
            plan["blocks"].append((width, freq, t))
    plan["feature_map"] = plan["blocks"][-1]
    plan["spectral_nodes"] = freq
    plan["temporal_nodes"] = t
    return plan


class SincFilterbank(nn.Module):
    """Band-pass filters parameterized by learnable low/high cutoffs.

    Cutoffs are reparameterized with absolute values plus a minimum bandwidth
    so every raw parameter value yields 0 < f_low < f_high < sr/2.  Kernels
    are Hamming-windowed differences of two sinc low-pass kernels,
    initialized on a mel-spaced grid over [0, sr/2].
    """

    def __init__(self, n_filters: int = 70, kernel_size: int = 129, sample_rate: int = 16000,
                 min_low_hz: float = 30.0, min_band_hz: float = 50.0):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ValidationError("sinc kernel length must be odd for even symmetry")
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        self.sample_rate = sample_rate
        self.min_low_hz = min_low_hz
        self.min_band_hz = min_band_hz

        nyquist = sample_rate / 2
        mel = torch.linspace(self._to_mel(min_low_hz), self._to_mel(nyquist - min_band_hz),
                             n_filters + 1)
        hz = self._to_hz(mel)
        self.low_hz_ = nn.Parameter(hz[:-1] - min_low_hz)
        self.band_hz_ = nn.Parameter(hz[1:] - hz[:-1] - min_band_hz)

        half = (kernel_size - 1) // 2
        n = torch.arange(kernel_size) - half
        self.register_buffer("time_", n / sample_rate)
        self.register_buffer("window_", torch.hamming_window(kernel_size, periodic=False))

    @staticmethod
    def _to_mel(hz) -> torch.Tensor:
        return 2595.0 * torch.log10(1.0 + torch.as_tensor(hz, dtype=torch.float64) / 700.0)

    @staticmethod
    def _to_hz(mel: torch.Tensor) -> torch.Tensor:
        return (700.0 * (10.0 ** (mel / 2595.0) - 1.0)).float()

    def cutoffs(self) -> tuple[torch.Tensor, torch.Tensor]:
        nyquist = self.sample_rate / 2
        low = self.min_low_hz + self.low_hz_.abs()
        low = low.clamp(max=nyquist - self.min_band_hz)
        high = low + self.min_band_hz + self.band_hz_.abs()
        high = high.clamp(max=nyquist - self.min_band_hz / 2)
        return low, high

    def kernels(self) -> torch.Tensor:
        low, high = self.cutoffs()
        t = self.time_.to(low.dtype)
        win = self.window_.to(low.dtype)
        band = (high - low)[:, None]
        bp = (2 * high[:, None] * torch.sinc(2 * high[:, None] * t)
              - 2 * low[:, None] * torch.sinc(2 * low[:, None] * t))
        return (bp / (2 * band)) * win

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv1d(x, self.kernels().unsqueeze(1))


class SincNetLayer(nn.Module):
    """Filterbank conv, joint (filter, time) max-pool, BN and SeLU."""

    def __init__(self, n_filters: int = 70, kernel_size: int = 129, sample_rate: int = 16000,
                 expected_length: int | None = None):
        super().__init__()
        self.filterbank = SincFilterbank(n_filters, kernel_size, sample_rate)
        self.bn = nn.BatchNorm2d(1)
        self.expected_length = expected_length

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.expected_length is not None and x.shape[-1] != self.expected_length:
            raise ShapeError("sincnet input", (x.shape[0], 1, self.expected_length), x.shape)
        x = self.filterbank(x)          # (B, filters, L - k + 1)
        x = x.unsqueeze(1)              # (B, 1, filters, L - k + 1)
        x = F.max_pool2d(x, 3)
        return F.selu(self.bn(x))


class ResidualBlock(nn.Module):
    """Two (2, 3) convs with a skip connection, then a (1, 3) time pool.

    Convolutions are padded to preserve both axes (top-pad 1 on the frequency
    axis, 1 each side on time) so all printed sizes come from the pools
    alone.  When channel counts change, the skip uses a 1x1 projection.
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, (2, 3))
        self.bn = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, (2, 3))
        self.skip = (nn.Conv2d(in_channels, out_channels, 1)
                     if in_channels != out_channels else nn.Identity())
        self.pool = nn.MaxPool2d((1, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv1(F.pad(x, (1, 1, 1, 0)))
        y = F.selu(self.bn(y))
        y = self.conv2(F.pad(y, (1, 1, 1, 0)))
        return self.pool(y + self.skip(x))


class Frontend(nn.Module):
    """Per-channel encoder: sinc layer followed by the residual stack."""

    def __init__(self, input_length: int = 64600, sinc_filters: int = 70,
                 sinc_kernel: int = 129, sample_rate: int = 16000,
                 channels: tuple = (32, 64), blocks: tuple = (2, 4)):
        super().__init__()
        self.plan = frontend_shape_plan(input_length, sinc_kernel, sinc_filters,
                                        channels, blocks)
        self.input_length = input_length
        self.sinc = SincNetLayer(sinc_filters, sinc_kernel, sample_rate,
                                 expected_length=input_length)
        stack = []
        widths = [1] + [channels[0]] * blocks[0] + [channels[1]] * blocks[1]
        for cin, cout in zip(widths[:-1], widths[1:]):
            stack.append(ResidualBlock(cin, cout))
        self.blocks = nn.ModuleList(stack)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        fm = self.sinc(x)
        expected = (x.shape[0], 1) + tuple(self.plan["sinc_pooled"][1:])
        if tuple(fm.shape) != expected:
            raise ShapeError("sinc layer output", expected, fm.shape)
        for block, shape in zip(self.blocks, self.plan["blocks"]):
            fm = block(fm)
            if tuple(fm.shape[1:]) != tuple(shape):
                raise ShapeError("residual block output", (x.shape[0],) + tuple(shape), fm.shape)
        return fm


def to_graph_spectral(fm: torch.Tensor) -> torch.Tensor:
    """Nodes are frequency bins; features average |fm| over time frames."""
    if fm.ndim != 4:
        raise ShapeError("feature map", ("B", "C", "F", "T"), fm.shape)
    return fm.abs().mean(dim=3)


def to_graph_temporal(fm: torch.Tensor) -> torch.Tensor:
    """Nodes are time frames; features average |fm| over frequency bins."""
    if fm.ndim != 4:
        raise ShapeError("feature map", ("B", "C", "F", "T"), fm.shape)
    return fm.abs().mean(dim=2)
