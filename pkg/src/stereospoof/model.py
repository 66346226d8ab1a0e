"""Detector assembly: frozen converter, dual-branch encoders, fusion, classifier.

The left branch encodes the left channel into a spectral graph (one node per
frequency bin); the right branch encodes the right channel into a temporal
graph (one node per frame).  Branch outputs are projected to a shared node
count, fused by element-wise multiplication, refined by a fusion encoder,
and classified into (bonafide, spoof) logits.  The single-branch ablation
routes the channel average through one branch and fuses it with itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import checkpointing, dataio
from .binauralizer import Binauralizer, BinauralizerConfig, binauralize_utterance
from .dataio import ConditioningTrack, Waveform
from .errors import ShapeError, ValidationError
from .frontend import Frontend, frontend_shape_plan, to_graph_spectral, to_graph_temporal
from .graph_attention import (GraphAttentionLayer, GraphProjection, TopKGraphPool,
                              round_half_up_count)


@dataclass
class DetectorConfig:
    input_length: int = 64600
    sample_rate: int = 16000
    sinc_filters: int = 70
    sinc_kernel: int = 129
    res_channels: tuple = (32, 64)
    res_blocks: tuple = (2, 4)
    branch_gat_out: int = 32
    fusion_gat_out: int = 16
    pool_spectral: float = 0.6
    pool_temporal: float = 0.8
    pool_fusion: float = 0.58
    projected_nodes: int = 12

    def __post_init__(self):
        self.res_channels = tuple(self.res_channels)
        self.res_blocks = tuple(self.res_blocks)

    @property
    def feature_dim(self) -> int:
        return self.res_channels[1]

    @property
    def embedding_nodes(self) -> int:
        return round_half_up_count(self.pool_fusion, self.projected_nodes)

    def shape_plan(self) -> dict:
        return frontend_shape_plan(self.input_length, self.sinc_kernel, self.sinc_filters,
                                   self.res_channels, self.res_blocks)


def desk_detector_config() -> DetectorConfig:
    """Reduced widths and input length for CPU-budget smoke runs."""
    return DetectorConfig(input_length=9600, res_channels=(16, 32),
                          branch_gat_out=16, fusion_gat_out=8)


class BranchEncoder(nn.Module):
    """One channel: frontend, graph formation, attention, pooling, projection."""

    def __init__(self, config: DetectorConfig, kind: str):
        super().__init__()
        if kind not in ("spectral", "temporal"):
            raise ValidationError(f"branch kind must be spectral or temporal, got {kind!r}")
        self.kind = kind
        self.frontend = Frontend(config.input_length, config.sinc_filters, config.sinc_kernel,
                                 config.sample_rate, config.res_channels, config.res_blocks)
        plan = self.frontend.plan
        nodes = plan["spectral_nodes"] if kind == "spectral" else plan["temporal_nodes"]
        ratio = config.pool_spectral if kind == "spectral" else config.pool_temporal
        self.gat = GraphAttentionLayer(config.feature_dim, config.branch_gat_out)
        self.pool = TopKGraphPool(config.branch_gat_out, ratio)
        kept = round_half_up_count(ratio, nodes)
        self.project = GraphProjection(kept, config.projected_nodes, axis="nodes")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        fm = self.frontend(x)
        graph = to_graph_spectral(fm) if self.kind == "spectral" else to_graph_temporal(fm)
        return self.project(self.pool(self.gat(graph)))


class FusionEncoder(nn.Module):
    """Attention over the fused graph, pooling, then feature-axis projection."""

    def __init__(self, config: DetectorConfig):
        super().__init__()
        self.gat = GraphAttentionLayer(config.branch_gat_out, config.fusion_gat_out)
        self.pool = TopKGraphPool(config.fusion_gat_out, config.pool_fusion)
        self.project = GraphProjection(config.fusion_gat_out, 1, axis="features")

    def forward(self, g: torch.Tensor) -> torch.Tensor:
        return self.project(self.pool(self.gat(g)))


def fuse(left: torch.Tensor, right: torch.Tensor) -> torch.Tensor:
    """Element-wise product of the two branch graphs."""
    if left.shape != right.shape:
        raise ShapeError("fusion inputs", left.shape, right.shape)
    return left * right


class Detector(nn.Module):
    """Stereo segment in, (bonafide, spoof) logits out."""

    def __init__(self, config: DetectorConfig | None = None):
        super().__init__()
        self.config = config or DetectorConfig()
        self.left = BranchEncoder(self.config, "spectral")
        self.right = BranchEncoder(self.config, "temporal")
        self.fusion = FusionEncoder(self.config)
        self.classifier = nn.Linear(self.config.embedding_nodes, 2)

    def _check_input(self, stereo: torch.Tensor) -> None:
        expected = ("B", 2, self.config.input_length)
        if stereo.ndim != 3 or stereo.shape[1] != 2 or stereo.shape[2] != self.config.input_length:
            raise ShapeError("detector input", expected, stereo.shape)

    def dual_branch(self, stereo: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        self._check_input(stereo)
        return self.left(stereo[:, 0:1]), self.right(stereo[:, 1:2])

    def forward(self, stereo: torch.Tensor) -> torch.Tensor:
        g_left, g_right = self.dual_branch(stereo)
        embedding = self.fusion(fuse(g_left, g_right))
        return self.classifier(embedding.flatten(1))

    def forward_single_branch(self, stereo: torch.Tensor, branch: str = "left") -> torch.Tensor:
        """Ablation: channel average through one branch, fused with itself."""
        self._check_input(stereo)
        if branch not in ("left", "right"):
            raise ValidationError(f"branch must be left or right, got {branch!r}")
        mono = stereo.mean(dim=1, keepdim=True)
        encoder = self.left if branch == "left" else self.right
        g = encoder(mono)
        embedding = self.fusion(fuse(g, g))
        return self.classifier(embedding.flatten(1))


class Pipeline(nn.Module):
    """Utterance-level model: frozen converter feeding the stereo detector."""

    def __init__(self, converter: Binauralizer, detector: Detector):
        super().__init__()
        self.converter = converter
        self.detector = detector

    def stereo_segments(self, w: Waveform, pool: list[ConditioningTrack],
                        seed: int) -> torch.Tensor:
        """Convert an utterance and window the stereo into detector inputs [n, 2, L]."""
        if w.channels != 1:
            raise ValidationError(f"pipeline expects mono utterances, got {w.channels} channels")
        stereo = binauralize_utterance(self.converter, w, pool, seed)
        windows = dataio.cyclic_windows(stereo.samples, self.detector.config.input_length)
        return torch.from_numpy(np.ascontiguousarray(windows)).float()

    def forward(self, w: Waveform, pool: list[ConditioningTrack], seed: int,
                ablation: str | None = None) -> torch.Tensor:
        """Logits for one utterance; multi-segment utterances average logits."""
        segments = self.stereo_segments(w, pool, seed)
        if ablation is None:
            logits = self.detector(segments)
        else:
            logits = self.detector.forward_single_branch(segments, branch=ablation)
        return logits.mean(dim=0)

    def score(self, w: Waveform, pool: list[ConditioningTrack], seed: int,
              ablation: str | None = None) -> float:
        """Trial score: bonafide logit minus spoof logit (higher = more genuine).

        Always evaluated with running batch-norm statistics; the detector's
        training mode is restored afterwards.
        """
        was_training = self.detector.training
        self.detector.eval()
        try:
            with torch.no_grad():
                logits = self.forward(w, pool, seed, ablation=ablation)
        finally:
            if was_training:
                self.detector.train()
        return float(logits[0].item() - logits[1].item())


def save_pipeline(path, pipeline: Pipeline, metadata: dict | None = None):
    config = {
        "detector": pipeline.detector.config,
        "binauralizer": pipeline.converter.config,
    }
    flat = {"detector": config["detector"].__dict__, "binauralizer": config["binauralizer"].__dict__}
    return checkpointing.save_checkpoint(
        path, kind="pipeline", state_dict=pipeline.state_dict(), config=flat,
        frozen=pipeline.converter.frozen, metadata=metadata)


def load_pipeline(path) -> Pipeline:
    payload = checkpointing.load_checkpoint(path, expected_kind="pipeline")
    det_cfg = DetectorConfig(**payload["config"]["detector"])
    bin_cfg = BinauralizerConfig(**{k: tuple(v) if isinstance(v, list) else v
                                    for k, v in payload["config"]["binauralizer"].items()})
    pipeline = Pipeline(Binauralizer(bin_cfg), Detector(det_cfg))
    pipeline.load_state_dict(payload["state_dict"])
    if payload["frozen"]:
        pipeline.converter.freeze()
    pipeline.eval()
    return pipeline


def save_binauralizer(path, model: Binauralizer, metadata: dict | None = None):
    return checkpointing.save_checkpoint(
        path, kind="binauralizer", state_dict=model.state_dict(),
        config=model.config, frozen=model.frozen, metadata=metadata)


def load_binauralizer(path) -> Binauralizer:
    payload = checkpointing.load_checkpoint(path, expected_kind="binauralizer")
    cfg = BinauralizerConfig(**{k: tuple(v) if isinstance(v, list) else v
                                for k, v in payload["config"].items()})
    model = Binauralizer(cfg)
    model.load_state_dict(payload["state_dict"])
    if payload["frozen"]:
        model.freeze()
    return model
