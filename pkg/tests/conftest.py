import numpy as np
import pytest
import torch

from stereospoof import dataio
from stereospoof.binauralizer import Binauralizer, BinauralizerConfig


@pytest.fixture(scope="session")
def fixture_corpus():
    """Small deterministic corpus shared across tests (seed 1234, 9600-sample utts)."""
    protocol, waveforms, pool = dataio.synth_fixture_dataset(
        1234, 8, sr=16000, utt_length=9600)
    return protocol, waveforms, pool


@pytest.fixture(scope="session")
def tiny_converter():
    """Narrow converter for tests that only need the structure."""
    torch.manual_seed(0)
    cfg = BinauralizerConfig(warpnet_channels=8, convnet_channels=8, segment_length=9600)
    return Binauralizer(cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


def identity_conditioning(length: int, sr: int = 16000) -> dataio.ConditioningTrack:
    """Source coincident with the listener origin, identity orientations."""
    frames = np.zeros((dataio.CONDITIONING_DIM, length))
    frames[3] = 1.0
    frames[10] = 1.0
    return dataio.ConditioningTrack(frames=frames, sample_rate=sr)
