"""Data ingest: trial protocols, PCM audio, segmentation, conditioning tracks.

Also provides a deterministic synthetic fixture corpus (tones plus artifact
variants, circular-walk conditioning) so the whole pipeline can run at desk
scale without any external dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioReadError, ProtocolParseError, ValidationError

BONAFIDE = "bonafide"
SPOOF = "spoof"
SUBSETS = ("train", "dev", "eval")

SEGMENT_LENGTH = 64600

# Conditioning feature layout, one row per feature, one column per sample.
# Positions are in meters, orientations are unit quaternions (w, x, y, z).
COND_SRC_POS = slice(0, 3)
COND_SRC_QUAT = slice(3, 7)
COND_LISTENER_POS = slice(7, 10)
COND_LISTENER_QUAT = slice(10, 14)
CONDITIONING_DIM = 14


@dataclass
class Waveform:
    """A 1- or 2-channel sample sequence with its rate.

    ``samples`` is always 2-D ``[channels, length]`` with values in [-1, 1]
    for audio loaded from PCM containers.  ``resampled`` records whether the
    container rate differed from the requested rate at load time.
    """

    samples: np.ndarray
    sample_rate: int
    resampled: bool = False

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        if self.samples.ndim != 2:
            raise ValidationError(f"waveform must be [channels, length], got ndim={self.samples.ndim}")
        if self.samples.shape[0] not in (1, 2):
            raise ValidationError(f"waveform must have 1 or 2 channels, got {self.samples.shape[0]}")
        if self.samples.shape[1] < 1:
            raise ValidationError("waveform must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


@dataclass
class ConditioningTrack:
    """Per-sample source/listener position and orientation features.

    ``frames`` is ``[n_features, length]``.  ``resampled`` flags a rate
    conversion at load time; ``tiled`` flags cyclic extension applied because
    no track in a pool was long enough.
    """

    frames: np.ndarray
    sample_rate: int
    resampled: bool = False
    tiled: bool = False

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if self.frames.shape[1] < 1:
            raise ValidationError("conditioning track must contain at least one frame")
        if not np.all(np.isfinite(self.frames)):
            raise ValidationError("conditioning track contains non-finite values")

    @property
    def n_features(self) -> int:
        return self.frames.shape[0]

    @property
    def length(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class ProtocolEntry:
    speaker_id: str
    utterance_id: str
    attack_id: str
    label: str


@dataclass
class TrialProtocol:
    entries: list[ProtocolEntry]
    subset: str

    def __post_init__(self):
        if self.subset not in SUBSETS:
            raise ValidationError(f"subset must be one of {SUBSETS}, got {self.subset!r}")
        seen = set()
        for e in self.entries:
            if e.utterance_id in seen:
                raise ValidationError(f"duplicate utterance id {e.utterance_id!r} in {self.subset} protocol")
            seen.add(e.utterance_id)

    def __len__(self) -> int:
        return len(self.entries)

    def counts(self) -> tuple[int, int]:
        """(n_bonafide, n_spoof)."""
        n_bona = sum(1 for e in self.entries if e.label == BONAFIDE)
        return n_bona, len(self.entries) - n_bona


@dataclass
class SegmentBatch:
    """Fixed-length mono windows cut from one utterance.

    ``segments`` is ``[n_segments, segment_length]``.  The last window is
    padded by cyclic repetition of the utterance, so concatenating all
    windows and truncating to ``original_length`` reconstructs the input.
    """

    segments: np.ndarray
    sample_rate: int
    original_length: int
    source_utterance_id: str = ""

    @property
    def n_segments(self) -> int:
        return self.segments.shape[0]

    @property
    def segment_length(self) -> int:
        return self.segments.shape[1]


def parse_protocol(path, subset: str) -> TrialProtocol:
    """Parse a whitespace-separated trial protocol.

    Expected line layout: ``SPEAKER UTT_ID - ATTACK_ID KEY`` with KEY either
    ``bonafide`` or ``spoof``.  Empty lines are skipped; any other deviation
    raises with the offending line number.
    """
    path = Path(path)
    entries = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 5:
                raise ProtocolParseError(path, line_no, f"expected 5 fields, got {len(tokens)}")
            speaker, utt, _unused, attack, key = tokens
            if key not in (BONAFIDE, SPOOF):
                raise ValidationError(f"{path}:{line_no}: unknown key {key!r} (expected bonafide or spoof)")
            entries.append(ProtocolEntry(speaker, utt, attack, key))
    return TrialProtocol(entries=entries, subset=subset)


def write_protocol(protocol: TrialProtocol, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in protocol.entries:
            fh.write(f"{e.speaker_id} {e.utterance_id} - {e.attack_id} {e.label}\n")


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float32) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float32) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float32) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float32)
    raise AudioReadError(f"unsupported PCM sample format {data.dtype}")


def load_waveform(path, expected_sr: int | None) -> Waveform:
    """Load a linear-PCM audio file, normalize to [-1, 1], resample if needed.

    ``expected_sr=None`` keeps the container's native rate.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioReadError(f"cannot read {path}: {exc}") from exc
    if data.size == 0:
        raise ValidationError(f"{path}: zero-length audio")
    data = _pcm_to_float(data)
    if data.ndim == 1:
        data = data[np.newaxis, :]
    else:
        data = data.T  # wav containers store [length, channels]
    resampled = False
    if expected_sr is None:
        expected_sr = rate
    if rate != expected_sr:
        g = math.gcd(int(expected_sr), int(rate))
        data = resample_poly(data, expected_sr // g, rate // g, axis=1).astype(np.float32)
        if data.shape[1] < 1:
            data = np.zeros((data.shape[0], 1), dtype=np.float32)
        data = np.clip(data, -1.0, 1.0)
        resampled = True
    return Waveform(samples=data, sample_rate=expected_sr, resampled=resampled)


def save_waveform(w: Waveform, path) -> None:
    """Write a waveform as 16-bit linear PCM (same 1/32768 scale as loading)."""
    scaled = np.round(np.clip(w.samples, -1.0, 1.0) * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype(np.int16)
    wavfile.write(Path(path), w.sample_rate, pcm[0] if w.channels == 1 else pcm.T)


def cyclic_windows(samples: np.ndarray, seg_len: int) -> np.ndarray:
    """Cut ``[channels, length]`` into ``[n, channels, seg_len]`` windows.

    The signal is extended cyclically so the last window is padded by
    repetition of the whole sequence from its start.
    """
    length = samples.shape[1]
    n_seg = max(1, -(-length // seg_len))
    idx = np.arange(n_seg * seg_len) % length
    return samples[:, idx].reshape(samples.shape[0], n_seg, seg_len).transpose(1, 0, 2)


def segment_utterance(w: Waveform, seg_len: int = SEGMENT_LENGTH, utterance_id: str = "") -> SegmentBatch:
    """Split a mono utterance into fixed-size windows with cyclic padding."""
    if w.channels != 1:
        raise ValidationError(f"segmentation expects mono input, got {w.channels} channels")
    if seg_len < 1:
        raise ValidationError(f"segment length must be positive, got {seg_len}")
    windows = cyclic_windows(w.samples, seg_len)[:, 0, :]
    return SegmentBatch(
        segments=windows,
        sample_rate=w.sample_rate,
        original_length=w.length,
        source_utterance_id=utterance_id,
    )


def merge_segments(converted: list[np.ndarray], original_length: int, sample_rate: int) -> Waveform:
    """Concatenate converted 2-channel segments and truncate to the source length."""
    if len(converted) == 0:
        raise ValidationError("cannot merge an empty segment list")
    segs = []
    for i, seg in enumerate(converted):
        seg = np.asarray(seg)
        if seg.ndim != 2 or seg.shape[0] != 2:
            raise ValidationError(f"segment {i} is not 2-channel: shape {seg.shape}")
        if seg.shape[1] != converted[0].shape[1]:
            raise ValidationError(f"segment {i} length {seg.shape[1]} differs from {converted[0].shape[1]}")
        segs.append(seg)
    stereo = np.concatenate(segs, axis=1)[:, :original_length]
    return Waveform(samples=stereo, sample_rate=sample_rate)


def sample_conditioning(pool: list[ConditioningTrack], length: int, rng_seed) -> ConditioningTrack:
    """Draw a conditioning window of ``length`` frames uniformly from a pool.

    Picks a track uniformly among those with at least ``length`` frames, then
    a start offset uniformly among valid positions.  If no track is long
    enough, the longest one is tiled cyclically and the result is flagged.
    Pure function of (pool, length, rng_seed).
    """
    if not pool:
        raise ValidationError("conditioning pool is empty")
    rng = np.random.default_rng(rng_seed)
    eligible = [t for t in pool if t.length >= length]
    if eligible:
        track = eligible[int(rng.integers(len(eligible)))]
        offset = int(rng.integers(track.length - length + 1))
        frames = track.frames[:, offset:offset + length]
        return ConditioningTrack(frames=frames.copy(), sample_rate=track.sample_rate)
    longest = max(pool, key=lambda t: t.length)
    idx = np.arange(length) % longest.length
    return ConditioningTrack(frames=longest.frames[:, idx], sample_rate=longest.sample_rate, tiled=True)


def save_conditioning(track: ConditioningTrack, path) -> None:
    """Write the text matrix format: header ``sample_rate n_features n_samples``."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{track.sample_rate} {track.n_features} {track.length}\n")
        for row in track.frames:
            fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")


def load_conditioning(path, expected_sr: int | None = None) -> ConditioningTrack:
    """Read a conditioning track, linearly resampling positions if the rate differs."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValidationError(f"{path}: bad conditioning header (want 'sample_rate n_features n_samples')")
        try:
            sr, n_feat, n_samp = (int(v) for v in header)
        except ValueError as exc:
            raise ValidationError(f"{path}: non-integer conditioning header") from exc
        rows = []
        for i in range(n_feat):
            row = np.array(fh.readline().split(), dtype=np.float64)
            if row.size != n_samp:
                raise ValidationError(f"{path}: row {i} has {row.size} values, expected {n_samp}")
            rows.append(row)
    frames = np.vstack(rows)
    resampled = False
    if expected_sr is not None and expected_sr != sr:
        # Positions and orientations vary slowly; linear interpolation is the
        # honest conversion for pose data (polyphase filtering would ring).
        n_out = max(1, int(round(n_samp * expected_sr / sr)))
        t_in = np.arange(n_samp) / sr
        t_out = np.arange(n_out) / expected_sr
        frames = np.vstack([np.interp(t_out, t_in, row) for row in frames])
        sr = expected_sr
        resampled = True
    return ConditioningTrack(frames=frames, sample_rate=sr, resampled=resampled)


# ---------------------------------------------------------------------------
# Synthetic fixture corpus
# ---------------------------------------------------------------------------

FIXTURE_SPEAKERS = 8
FIXTURE_WALK_RADIUS_M = 1.5
_SUBSET_TAG = {"train": "T", "dev": "D", "eval": "E"}
_SUBSET_ATTACKS = {
    "train": [f"A{i:02d}" for i in range(1, 7)],
    "dev": [f"A{i:02d}" for i in range(1, 7)],
    "eval": [f"A{i:02d}" for i in range(7, 20)],
}


def _harmonic_tone(rng, length: int, sr: int, f0: float, gains: np.ndarray,
                   phase_jitter: float = 0.0) -> np.ndarray:
    """Band-limited harmonic tone; per-harmonic gains and optional slow phase jitter."""
    t = np.arange(length) / sr
    sig = np.zeros(length)
    phases = rng.uniform(0, 2 * np.pi, size=len(gains))
    for k, (gain, phi) in enumerate(zip(gains, phases), start=1):
        if gain == 0.0:
            continue
        jitter = 0.0
        if phase_jitter > 0.0:
            # Smooth random phase walk: integrated noise, band-limited by a
            # moving average so the jitter smears rather than whitens the line.
            walk = np.cumsum(rng.normal(0.0, 1.0, size=length))
            kernel = np.ones(1024) / 1024.0
            walk = np.convolve(walk, kernel, mode="same")
            walk = walk / (np.abs(walk).max() + 1e-12)
            jitter = phase_jitter * k * walk
        sig = sig + gain * np.sin(2 * np.pi * k * f0 * t + phi + jitter)
    ramp = min(length // 2, int(0.025 * sr))
    envelope = np.ones(length)
    if ramp > 0:
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        envelope[:ramp] = fade
        envelope[-ramp:] = fade[::-1]
    sig = sig * envelope
    sig = sig + rng.normal(0.0, 1e-3, size=length)
    peak = np.abs(sig).max()
    return (0.7 * sig / peak).astype(np.float32) if peak > 0 else sig.astype(np.float32)


def _bonafide_gains(n_harmonics: int) -> np.ndarray:
    return np.array([1.0 / k for k in range(1, n_harmonics + 1)])


def _spoof_gains(n_harmonics: int) -> np.ndarray:
    # Spectral notches: even harmonics removed, remaining upper partials boosted.
    gains = _bonafide_gains(n_harmonics)
    gains[1::2] = 0.0
    gains[4:] *= 2.0
    return gains


def synth_conditioning_pool(seed, n_tracks: int, length: int, sr: int,
                            radius_m: float = FIXTURE_WALK_RADIUS_M) -> list[ConditioningTrack]:
    """Circular-walk conditioning: source orbits a fixed listener at ``radius_m``."""
    rng = np.random.default_rng([int(seed), 0xC01D])
    pool = []
    for _ in range(n_tracks):
        theta0 = rng.uniform(0, 2 * np.pi)
        lap_seconds = rng.uniform(6.0, 12.0)
        direction = rng.choice([-1.0, 1.0])
        t = np.arange(length) / sr
        theta = theta0 + direction * 2 * np.pi * t / lap_seconds
        frames = np.zeros((CONDITIONING_DIM, length))
        frames[0] = radius_m * np.cos(theta)
        frames[1] = radius_m * np.sin(theta)
        frames[2] = 0.0
        frames[3] = 1.0  # source orientation: identity quaternion
        frames[7:10] = 0.0  # listener at the origin
        frames[10] = 1.0  # listener orientation: identity quaternion
        pool.append(ConditioningTrack(frames=frames, sample_rate=sr))
    return pool


def synth_fixture_dataset(seed, n_utts: int, sr: int = 16000, class_ratio: float = 0.5,
                          utt_length: int = SEGMENT_LENGTH, subset: str = "train",
                          n_tracks: int = FIXTURE_SPEAKERS):
    """Deterministic desk-scale corpus.

    Bonafide trials are band-limited harmonic tones; spoof trials reuse the
    same fundamentals but carry injected artifacts (spectral notches plus
    phase jitter).  Returns (protocol, {utt_id: Waveform}, conditioning pool).
    """
    if n_utts < 2:
        raise ValidationError(f"need at least 2 utterances, got {n_utts}")
    rng = np.random.default_rng([int(seed), _SUBSET_TAG[subset].encode()[0]])
    n_bona = int(round(n_utts * class_ratio))
    n_spoof = n_utts - n_bona
    f0_table = rng.uniform(110.0, 260.0, size=max(n_bona, n_spoof, 1))
    n_harmonics = 12

    tag = _SUBSET_TAG[subset]
    attacks = _SUBSET_ATTACKS[subset]
    entries = []
    waveforms = {}
    for i in range(n_utts):
        is_bona = i < n_bona
        class_index = i if is_bona else i - n_bona
        f0 = float(f0_table[class_index % len(f0_table)])
        utt_id = f"FX_{tag}_{i + 1:07d}"
        speaker = f"FX_{(i % FIXTURE_SPEAKERS) + 1:04d}"
        if is_bona:
            samples = _harmonic_tone(rng, utt_length, sr, f0, _bonafide_gains(n_harmonics))
            entries.append(ProtocolEntry(speaker, utt_id, "-", BONAFIDE))
        else:
            samples = _harmonic_tone(rng, utt_length, sr, f0, _spoof_gains(n_harmonics),
                                     phase_jitter=2.5)
            attack = attacks[class_index % len(attacks)]
            entries.append(ProtocolEntry(speaker, utt_id, attack, SPOOF))
        waveforms[utt_id] = Waveform(samples=samples[np.newaxis, :], sample_rate=sr)

    pool = synth_conditioning_pool(seed, n_tracks, int(utt_length * 1.5), sr)
    return TrialProtocol(entries=entries, subset=subset), waveforms, pool


def reference_binauralize(mono: np.ndarray, track: ConditioningTrack, sr: int,
                          ear_offset_m: float = 0.09, speed_of_sound: float = 343.0) -> np.ndarray:
    """Analytic two-channel render: per-ear fractional delay plus distance gain.

    Serves as the ground-truth stereo for converter pretraining fixtures.
    Implemented in plain numpy, independent of the neural converter.
    """
    x = np.asarray(mono, dtype=np.float64).reshape(-1)
    length = x.shape[0]
    src = track.frames[COND_SRC_POS, :length]
    lis = track.frames[COND_LISTENER_POS, :length]
    t_idx = np.arange(length, dtype=np.float64)
    out = np.zeros((2, length))
    for e, side in enumerate((+1.0, -1.0)):
        ear = lis.copy()
        ear[1] += side * ear_offset_m  # identity listener orientation: ears on the y axis
        dist = np.sqrt(((src - ear) ** 2).sum(axis=0))
        read = np.clip(t_idx - sr * dist / speed_of_sound, 0.0, None)
        gain = 1.0 / (1.0 + dist)
        out[e] = gain * np.interp(read, t_idx, x)
    return out.astype(np.float32)


@dataclass
class PretrainItem:
    item_id: str
    mono: Waveform
    stereo: Waveform
    conditioning: ConditioningTrack


def synth_pretraining_pairs(seed, n_items: int, sr: int = 16000,
                            length: int = 16000) -> list[PretrainItem]:
    """Paired (mono, conditioning, true stereo) fixtures for converter pretraining."""
    rng = np.random.default_rng([int(seed), 0x9A12])
    pool = synth_conditioning_pool(seed + 1, max(4, n_items), int(length * 1.25), sr)
    items = []
    for i in range(n_items):
        f0 = float(rng.uniform(110.0, 260.0))
        mono = _harmonic_tone(rng, length, sr, f0, _bonafide_gains(10))
        track = sample_conditioning(pool, length, rng_seed=[int(seed), 77, i])
        stereo = reference_binauralize(mono, track, sr)
        items.append(PretrainItem(
            item_id=f"PT_{i + 1:04d}",
            mono=Waveform(samples=mono[np.newaxis, :], sample_rate=sr),
            stereo=Waveform(samples=stereo, sample_rate=sr),
            conditioning=track,
        ))
    return items


def write_fixture_tree(root, seed, n_utts: int = 8, sr: int = 16000,
                       class_ratio: float = 0.5, utt_length: int = SEGMENT_LENGTH,
                       n_pretrain: int = 4, pretrain_length: int = 16000,
                       subsets=SUBSETS) -> dict:
    """Materialize a fixture corpus on disk.

    Layout::

        root/protocols/<subset>.txt
        root/audio/<subset>/<utt_id>.wav
        root/conditioning/track_<k>.txt
        root/pretrain/<item_id>/{mono.wav,binaural.wav,conditioning.txt}
    """
    root = Path(root)
    manifest = {"root": str(root), "subsets": {}, "pretrain": []}
    (root / "protocols").mkdir(parents=True, exist_ok=True)
    (root / "conditioning").mkdir(parents=True, exist_ok=True)
    pool = None
    for k, subset in enumerate(subsets):
        protocol, waveforms, pool = synth_fixture_dataset(
            seed + k, n_utts, sr=sr, class_ratio=class_ratio,
            utt_length=utt_length, subset=subset)
        audio_dir = root / "audio" / subset
        audio_dir.mkdir(parents=True, exist_ok=True)
        for utt_id, w in waveforms.items():
            save_waveform(w, audio_dir / f"{utt_id}.wav")
        write_protocol(protocol, root / "protocols" / f"{subset}.txt")
        manifest["subsets"][subset] = {"n_utts": len(protocol), "audio_dir": str(audio_dir)}
    for k, track in enumerate(pool):
        save_conditioning(track, root / "conditioning" / f"track_{k:02d}.txt")
    for item in synth_pretraining_pairs(seed, n_pretrain, sr=sr, length=pretrain_length):
        item_dir = root / "pretrain" / item.item_id
        item_dir.mkdir(parents=True, exist_ok=True)
        save_waveform(item.mono, item_dir / "mono.wav")
        save_waveform(item.stereo, item_dir / "binaural.wav")
        save_conditioning(item.conditioning, item_dir / "conditioning.txt")
        manifest["pretrain"].append(item.item_id)
    return manifest


class DirAudioStore:
    """Looks up ``<root>/<utterance_id>.wav`` and loads at a fixed rate."""

    def __init__(self, root, sample_rate: int, extension: str = ".wav"):
        self.root = Path(root)
        self.sample_rate = sample_rate
        self.extension = extension

    def load(self, utterance_id: str) -> Waveform:
        path = self.root / f"{utterance_id}{self.extension}"
        if not path.exists():
            raise FileNotFoundError(f"missing audio for trial {utterance_id}: {path}")
        return load_waveform(path, expected_sr=self.sample_rate)


class InMemoryAudioStore:
    """Waveforms held in a dict; used by tests and the fixture pipeline."""

    def __init__(self, waveforms: dict[str, Waveform]):
        self.waveforms = dict(waveforms)

    def load(self, utterance_id: str) -> Waveform:
        if utterance_id not in self.waveforms:
            raise FileNotFoundError(f"missing audio for trial {utterance_id}")
        return self.waveforms[utterance_id]


def load_conditioning_pool(cond_dir, expected_sr: int) -> list[ConditioningTrack]:
    """Load every ``*.txt`` conditioning track under a directory."""
    paths = sorted(Path(cond_dir).glob("*.txt"))
    if not paths:
        raise ValidationError(f"no conditioning tracks found under {cond_dir}")
    return [load_conditioning(p, expected_sr=expected_sr) for p in paths]


def load_pretrain_corpus(corpus_dir, sr: int) -> list[PretrainItem]:
    """Load paired pretraining items from the on-disk layout of write_fixture_tree."""
    corpus_dir = Path(corpus_dir)
    item_dirs = sorted(p for p in corpus_dir.iterdir() if p.is_dir())
    if not item_dirs:
        raise ValidationError(f"no pretraining items under {corpus_dir} "
                              "(expected <id>/mono.wav, <id>/binaural.wav, <id>/conditioning.txt)")
    items = []
    for d in item_dirs:
        mono = load_waveform(d / "mono.wav", expected_sr=sr)
        stereo = load_waveform(d / "binaural.wav", expected_sr=sr)
        track = load_conditioning(d / "conditioning.txt", expected_sr=sr)
        if track.length < mono.length:
            raise ValidationError(f"{d}: conditioning shorter than audio "
                                  f"({track.length} < {mono.length})")
        track = ConditioningTrack(frames=track.frames[:, :mono.length],
                                  sample_rate=track.sample_rate, resampled=track.resampled)
        items.append(PretrainItem(item_id=d.name, mono=mono, stereo=stereo, conditioning=track))
    return items
