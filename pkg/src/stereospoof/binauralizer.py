"""Mono-to-stereo converter: neural time warping plus a conditional temporal ConvNet.

The converter reads a mono segment and a conditioning track (source/listener
pose per sample).  A geometric warpfield derived from propagation delay is
corrected by a small CNN (the warp net), applied to the signal under
monotonicity and causality constraints, and the warped two-channel signal is
refined by a stack of dilated causal convolutions modulated by the
conditioning.  Pretrained on paired mono/stereo data, then frozen inside the
detector.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import dataio
from .dataio import ConditioningTrack, Waveform
from .errors import ValidationError

SPEED_OF_SOUND_M_S = 343.0


@dataclass
class BinauralizerConfig:
    conditioning_dim: int = dataio.CONDITIONING_DIM
    warpnet_layers: int = 3
    warpnet_kernel: int = 5
    warpnet_channels: int = 64
    convnet_blocks: int = 3
    convnet_dilations: tuple = (1, 2, 4, 8)
    convnet_kernel: int = 2
    convnet_channels: int = 64
    ear_offset_m: float = 0.09
    speed_of_sound: float = SPEED_OF_SOUND_M_S
    segment_length: int = dataio.SEGMENT_LENGTH

    @property
    def receptive_field(self) -> int:
        per_block = sum((self.convnet_kernel - 1) * d for d in self.convnet_dilations)
        return 1 + self.convnet_blocks * per_block


def desk_binauralizer_config() -> BinauralizerConfig:
    """Reduced widths for CPU-budget smoke runs; structure unchanged."""
    return BinauralizerConfig(warpnet_channels=32, convnet_channels=16, segment_length=16000)


def _quaternion_rotate(quat: torch.Tensor, vec: torch.Tensor) -> torch.Tensor:
    """Rotate ``vec`` [3] by unit quaternions ``quat`` [B, 4, T] (w, x, y, z)."""
    w, qx, qy, qz = quat[:, 0], quat[:, 1], quat[:, 2], quat[:, 3]
    vx, vy, vz = vec
    # t = 2 q x v, v' = v + w t + q x t
    tx = 2 * (qy * vz - qz * vy)
    ty = 2 * (qz * vx - qx * vz)
    tz = 2 * (qx * vy - qy * vx)
    rx = vx + w * tx + (qy * tz - qz * ty)
    ry = vy + w * ty + (qz * tx - qx * tz)
    rz = vz + w * tz + (qx * ty - qy * tx)
    return torch.stack([rx, ry, rz], dim=1)


def geometric_warpfield_tensor(cond: torch.Tensor, sample_rate: int,
                               ear_offset_m: float = 0.09,
                               speed_of_sound: float = SPEED_OF_SOUND_M_S) -> torch.Tensor:
    """Per-ear source read positions from propagation delay.

    ``cond`` is [B, F, T] in the documented conditioning layout.  Returns
    [B, 2, T] with entry t - sr * dist(source_t, ear_t) / c, clamped to
    [0, t].  Ear positions are the listener position offset by
    ``ear_offset_m`` along the listener's local y axis (left ear +y).
    """
    if not torch.isfinite(cond).all():
        raise ValidationError("conditioning contains non-finite values")
    src = cond[:, dataio.COND_SRC_POS]
    lis = cond[:, dataio.COND_LISTENER_POS]
    lis_quat = cond[:, dataio.COND_LISTENER_QUAT]
    t_idx = torch.arange(cond.shape[-1], dtype=cond.dtype, device=cond.device)
    ears = []
    for side in (1.0, -1.0):
        offset = _quaternion_rotate(lis_quat, torch.tensor(
            [0.0, side * ear_offset_m, 0.0], dtype=cond.dtype, device=cond.device))
        ear = lis + offset
        dist = torch.linalg.vector_norm(src - ear, dim=1)
        rho = t_idx - sample_rate * dist / speed_of_sound
        ears.append(rho.clamp_min(0.0).minimum(t_idx))
    return torch.stack(ears, dim=1)


def geometric_warpfield(track: ConditioningTrack, sample_rate: int,
                        ear_offset_m: float = 0.09,
                        speed_of_sound: float = SPEED_OF_SOUND_M_S) -> np.ndarray:
    """Convenience wrapper over the tensor version for a single track."""
    cond = torch.from_numpy(track.frames).double().unsqueeze(0)
    rho = geometric_warpfield_tensor(cond, sample_rate, ear_offset_m, speed_of_sound)
    return rho[0].numpy()


def enforce_warp(warp: torch.Tensor) -> torch.Tensor:
    """Impose monotonicity and causality on raw warp positions.

    Equivalent to the per-sample recurrence p_t = min(t, max(p_{t-1}, w_t)):
    since p_{t-1} <= t-1 < t, the min distributes over the max, so the whole
    sequence is the running maximum of the causally clamped positions.
    """
    t_idx = torch.arange(warp.shape[-1], dtype=warp.dtype, device=warp.device)
    return torch.cummax(torch.minimum(warp, t_idx), dim=-1).values


def apply_warp(x: torch.Tensor, warp: torch.Tensor) -> torch.Tensor:
    """Read a mono signal [B, 1, T] at enforced warp positions [B, 2, T].

    Linear interpolation between neighboring samples; fractional reads before
    sample 0 clamp to sample 0.  Differentiable in both the signal and the
    warpfield.
    """
    if x.shape[-1] != warp.shape[-1]:
        raise ValidationError(f"signal length {x.shape[-1]} != warpfield length {warp.shape[-1]}")
    pos = enforce_warp(warp)
    i0 = torch.floor(pos)
    frac = pos - i0
    last = x.shape[-1] - 1
    i0c = i0.long().clamp(0, last)
    i1c = (i0.long() + 1).clamp(0, last)
    xg = x.expand(-1, warp.shape[1], -1)
    v0 = torch.gather(xg, -1, i0c)
    v1 = torch.gather(xg, -1, i1c)
    return v0 + frac * (v1 - v0)


class WarpNet(nn.Module):
    """Temporal CNN over the conditioning track emitting per-ear warp corrections.

    The final layer is zero-initialized so a fresh converter starts from pure
    geometric warping.
    """

    def __init__(self, config: BinauralizerConfig):
        super().__init__()
        k = config.warpnet_kernel
        c = config.warpnet_channels
        pad = k // 2
        layers = []
        in_ch = config.conditioning_dim
        for _ in range(config.warpnet_layers - 1):
            layers.append(nn.Conv1d(in_ch, c, k, padding=pad))
            in_ch = c
        self.hidden = nn.ModuleList(layers)
        self.out = nn.Conv1d(in_ch, 2, k, padding=pad)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    @property
    def receptive_field(self) -> int:
        n_layers = len(self.hidden) + 1
        return 1 + n_layers * (self.out.kernel_size[0] - 1)

    def forward(self, cond: torch.Tensor) -> torch.Tensor:
        h = cond
        for layer in self.hidden:
            h = F.selu(layer(h))
        return self.out(h)


class _ConditionedLayer(nn.Module):
    """One dilated causal conv with conditioning-driven affine modulation."""

    def __init__(self, channels: int, cond_dim: int, kernel: int, dilation: int):
        super().__init__()
        self.pad = (kernel - 1) * dilation
        self.conv = nn.Conv1d(channels, channels, kernel, dilation=dilation)
        self.cond = nn.Conv1d(cond_dim, 2 * channels, 1)

    def forward(self, h: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        y = self.conv(F.pad(h, (self.pad, 0)))
        gamma, beta = self.cond(cond).chunk(2, dim=1)
        return h + F.selu(y * (1.0 + gamma) + beta)


class ConditionalConvNet(nn.Module):
    """Stacked dilated causal convolutions refining the warped two-channel signal.

    Carries a global residual from its input; the output projection is
    zero-initialized, so a fresh net is the identity map.
    """

    def __init__(self, config: BinauralizerConfig):
        super().__init__()
        c = config.convnet_channels
        self.input_proj = nn.Conv1d(2, c, 1)
        self.layers = nn.ModuleList([
            _ConditionedLayer(c, config.conditioning_dim, config.convnet_kernel, d)
            for _ in range(config.convnet_blocks)
            for d in config.convnet_dilations
        ])
        self.output_proj = nn.Conv1d(c, 2, 1)
        nn.init.zeros_(self.output_proj.weight)
        nn.init.zeros_(self.output_proj.bias)

    def forward(self, x_lr: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if x_lr.shape[-1] != cond.shape[-1]:
            raise ValidationError(
                f"signal length {x_lr.shape[-1]} != conditioning length {cond.shape[-1]}")
        h = self.input_proj(x_lr)
        for layer in self.layers:
            h = layer(h, cond)
        return x_lr + self.output_proj(h)


class Binauralizer(nn.Module):
    """Full converter: geometric warp + warp net correction + conditional ConvNet."""

    def __init__(self, config: BinauralizerConfig | None = None):
        super().__init__()
        self.config = config or BinauralizerConfig()
        self.warpnet = WarpNet(self.config)
        self.convnet = ConditionalConvNet(self.config)
        self.frozen = False

    def forward(self, x: torch.Tensor, cond: torch.Tensor, sample_rate: int) -> torch.Tensor:
        if x.shape[-1] != cond.shape[-1]:
            raise ValidationError(f"audio length {x.shape[-1]} != conditioning length {cond.shape[-1]}")
        rho = geometric_warpfield_tensor(cond, sample_rate,
                                         ear_offset_m=self.config.ear_offset_m,
                                         speed_of_sound=self.config.speed_of_sound)
        rho_prime = self.warpnet(cond)
        x_lr = apply_warp(x, rho + rho_prime)
        return self.convnet(x_lr, cond)

    def freeze(self) -> "Binauralizer":
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        self.frozen = True
        return self

    def param_hash(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            digest.update(name.encode())
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


def binauralize_utterance(model: Binauralizer, w: Waveform,
                          pool: list[ConditioningTrack], seed: int) -> Waveform:
    """Utterance-level conversion: segment, convert each window, merge, truncate.

    Conditioning for each window is drawn from the pool with a seed derived
    from (seed, window index), so the result is a pure function of
    (waveform, parameters, pool, seed).
    """
    batch = dataio.segment_utterance(w, seg_len=model.config.segment_length)
    dtype = next(model.parameters()).dtype
    base = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    base = [int(s) for s in base]
    converted = []
    with torch.no_grad():
        for i in range(batch.n_segments):
            track = dataio.sample_conditioning(pool, batch.segment_length,
                                               rng_seed=base + [i])
            x = torch.from_numpy(batch.segments[i]).to(dtype).reshape(1, 1, -1)
            c = torch.from_numpy(track.frames).to(dtype).unsqueeze(0)
            y = model(x, c, sample_rate=w.sample_rate)
            converted.append(y[0].numpy())
    return dataio.merge_segments(converted, batch.original_length, w.sample_rate)


def _phase_term(pred: torch.Tensor, target: torch.Tensor, n_fft: int = 512) -> torch.Tensor:
    """Magnitude-weighted mismatch of unit phasors between prediction and target."""
    window = torch.hann_window(n_fft, dtype=pred.dtype, device=pred.device)
    flat_p = pred.reshape(-1, pred.shape[-1])
    flat_t = target.reshape(-1, target.shape[-1])
    sp = torch.stft(flat_p, n_fft, hop_length=n_fft // 4, window=window, return_complex=True)
    st = torch.stft(flat_t, n_fft, hop_length=n_fft // 4, window=window, return_complex=True)
    eps = 1e-8
    mag = st.abs()
    diff = sp / (sp.abs() + eps) - st / (mag + eps)
    return (diff.abs().square() * mag).sum() / (mag.sum() + eps)


def pretrain_loss(pred: torch.Tensor, target: torch.Tensor,
                  phase_loss: bool = False, phase_weight: float = 1.0) -> torch.Tensor:
    loss = F.mse_loss(pred, target)
    if phase_loss:
        loss = loss + phase_weight * _phase_term(pred, target)
    return loss


def pretrain_step(model: Binauralizer, batch, optimizer,
                  sample_rate: int, phase_loss: bool = False) -> float:
    """One optimizer update on a batch of (mono, conditioning, true stereo)."""
    mono, cond, target = batch
    model.train()
    optimizer.zero_grad()
    pred = model(mono, cond, sample_rate=sample_rate)
    loss = pretrain_loss(pred, target, phase_loss=phase_loss)
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"non-finite pretraining loss {loss.item()!r}: "
            f"pred range [{pred.min().item():g}, {pred.max().item():g}]")
    loss.backward()
    optimizer.step()
    return float(loss.item())


def pretrain(model: Binauralizer, items: list[dataio.PretrainItem], epochs: int,
             learning_rate: float = 1e-3, batch_size: int = 4, seed: int = 1234,
             chunk_length: int = 16000, phase_loss: bool = False):
    """Run converter pretraining; returns the per-epoch mean loss list.

    Each epoch draws one random chunk per item, shuffles, and steps over
    mini-batches with Adam (recipe: 100 epochs at full scale).
    """
    if not items:
        raise ValidationError("pretraining corpus is empty")
    sr = items[0].mono.sample_rate
    chunk = min(chunk_length, min(it.mono.length for it in items))
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(items))
        losses = []
        for start in range(0, len(order), batch_size):
            sel = order[start:start + batch_size]
            monos, conds, targets = [], [], []
            for j in sel:
                it = items[j]
                off = int(rng.integers(it.mono.length - chunk + 1))
                monos.append(it.mono.samples[:, off:off + chunk])
                conds.append(it.conditioning.frames[:, off:off + chunk])
                targets.append(it.stereo.samples[:, off:off + chunk])
            batch = (
                torch.from_numpy(np.stack(monos)).float(),
                torch.from_numpy(np.stack(conds)).float(),
                torch.from_numpy(np.stack(targets)).float(),
            )
            losses.append(pretrain_step(model, batch, optimizer, sample_rate=sr,
                                        phase_loss=phase_loss))
        history.append(float(np.mean(losses)))
    return history
