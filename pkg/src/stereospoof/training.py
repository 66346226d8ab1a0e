"""Seeded, resumable detector training with weighted cross entropy.

Full-scale recipe: 400 epochs, batch size 24, learning rate 1e-4, weight
decay 1e-4, Adam, seed 1234.  The converter stays frozen throughout; an
epoch log records ``epoch train_loss dev_eer wallclock`` and the best
dev-EER checkpoint is retained.
"""

from __future__ import annotations

import os
import random
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import checkpointing, dataio, evaluation
from .binauralizer import Binauralizer, binauralize_utterance
from .dataio import BONAFIDE, TrialProtocol
from .errors import ValidationError
from .model import Detector, DetectorConfig, Pipeline, save_pipeline

ENV_PREFIX = "STEREOSPOOF_"
LABEL_INDEX = {BONAFIDE: 0, "spoof": 1}


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 24
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    seed: int = 1234
    class_weights: tuple | None = None  # None: inverse class frequency from the protocol
    optimizer: str = "adam"
    checkpoint_dir: str = "checkpoints"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValidationError("rates must be positive")
        if self.optimizer != "adam":
            raise ValidationError(f"unsupported optimizer {self.optimizer!r}")
        if self.class_weights is not None:
            self.class_weights = tuple(float(w) for w in self.class_weights)
            if len(self.class_weights) != 2 or any(w <= 0 for w in self.class_weights):
                raise ValidationError("class_weights must be two positive numbers")


def _parse_weights(raw: str):
    if raw.lower() in ("", "auto", "none"):
        return None
    return tuple(float(v) for v in raw.replace(",", " ").split())


TRAIN_COERCERS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "weight_decay": float,
    "seed": int,
    "class_weights": _parse_weights,
    "optimizer": str,
    "checkpoint_dir": str,
}
CONFIG_KEYS = tuple(TRAIN_COERCERS)


def parse_flat_config(text: str, coercers: dict) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment.

    Unknown keys are rejected with the full list of valid keys.
    """
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {line_no}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in coercers:
            raise ValidationError(f"config line {line_no}: unknown key {key!r} "
                                  f"(valid keys: {', '.join(coercers)})")
        values[key] = coercers[key](raw.strip())
    return values


def gather_config_values(coercers: dict, path=None, overrides=None, environ=None) -> dict:
    """Layer config sources: file, then STEREOSPOOF_* env vars, then key=value overrides."""
    values = {}
    if path is not None:
        values.update(parse_flat_config(Path(path).read_text(encoding="utf-8"), coercers))
    environ = os.environ if environ is None else environ
    for key in coercers:
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            values[key] = coercers[key](environ[env_key].strip())
    for item in overrides or []:
        if "=" not in item:
            raise ValidationError(f"override {item!r} must look like key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in coercers:
            raise ValidationError(f"unknown override key {key!r} "
                                  f"(valid keys: {', '.join(coercers)})")
        values[key] = coercers[key](raw)
    return values


def load_train_config(path=None, overrides=None, environ=None) -> TrainConfig:
    """Build a config from defaults, then file, then env vars, then overrides.

    Environment variables use the ``STEREOSPOOF_`` prefix with upper-case
    field names, e.g. ``STEREOSPOOF_EPOCHS=30``.
    """
    return TrainConfig(**gather_config_values(TRAIN_COERCERS, path, overrides, environ))


def set_global_seed(seed: int = 1234) -> None:
    """Seed every random stream used for init, sampling, and shuffling."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def weighted_ce_loss(logits: torch.Tensor, labels: torch.Tensor,
                     weights) -> torch.Tensor:
    """Mean over the batch of -w[y] * log softmax(logits)[y]."""
    if not torch.isfinite(logits).all():
        raise ValidationError("non-finite logits in loss computation")
    w = torch.as_tensor(weights, dtype=logits.dtype, device=logits.device)
    log_probs = torch.log_softmax(logits, dim=1)
    picked = log_probs.gather(1, labels.view(-1, 1)).squeeze(1)
    return (-w[labels] * picked).mean()


def class_weights_from_protocol(protocol: TrialProtocol) -> tuple[float, float]:
    """Inverse class frequency, normalized so the two weights sum to 2."""
    n_bona, n_spoof = protocol.counts()
    if n_bona == 0 or n_spoof == 0:
        raise ValidationError(f"protocol needs both classes (bona={n_bona}, spoof={n_spoof})")
    inv = np.array([1.0 / n_bona, 1.0 / n_spoof])
    w = 2.0 * inv / inv.sum()
    return float(w[0]), float(w[1])


@dataclass
class TrainResult:
    best_checkpoint: Path
    state_checkpoint: Path
    log_path: Path
    train_losses: list
    dev_eers: list
    best_dev_eer: float


def _cache_items(protocol, audio_store, pool, converter, seed, input_length):
    """Convert each utterance once (converter is frozen) and pre-window it."""
    items = []
    for entry in protocol.entries:
        w = audio_store.load(entry.utterance_id)
        stereo = binauralize_utterance(converter, w, pool,
                                       seed=evaluation.utterance_seed(seed, entry.utterance_id))
        windows = dataio.cyclic_windows(stereo.samples, input_length)
        items.append((entry, torch.from_numpy(np.ascontiguousarray(windows)).float()))
    return items


def _dev_eer(detector: Detector, dev_items) -> float:
    detector.eval()
    bona, spoof = [], []
    with torch.no_grad():
        for entry, windows in dev_items:
            logits = detector(windows).mean(dim=0)
            score = float(logits[0] - logits[1])
            (bona if entry.label == BONAFIDE else spoof).append(score)
    eer, _ = evaluation.compute_eer(bona, spoof)
    return eer


def train(config: TrainConfig, protocol: TrialProtocol, dev_protocol: TrialProtocol,
          audio_store, pool, converter: Binauralizer,
          detector_config: DetectorConfig | None = None,
          resume: bool = False) -> TrainResult:
    """Optimize the detector on converted stereo; the converter must stay frozen.

    Training draws one window per utterance per epoch from the cached stereo
    segmentation.  With ``resume=True`` an interrupted run continues from the
    trainer state in ``config.checkpoint_dir`` with identical randomness.
    """
    if len(protocol) == 0:
        raise ValidationError("training protocol is empty")
    out_dir = Path(config.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "best.ckpt"
    state_path = out_dir / "trainer_state.pt"
    log_path = out_dir / "train_log.txt"

    set_global_seed(config.seed)
    converter.freeze()
    frozen_hash = converter.param_hash()
    detector_config = detector_config or DetectorConfig()
    detector = Detector(detector_config)
    weights = config.class_weights or class_weights_from_protocol(protocol)
    optimizer = torch.optim.Adam(detector.parameters(), lr=config.learning_rate,
                                 weight_decay=config.weight_decay)

    train_items = _cache_items(protocol, audio_store, pool, converter, config.seed,
                               detector_config.input_length)
    dev_items = _cache_items(dev_protocol, audio_store, pool, converter, config.seed,
                             detector_config.input_length)
    labels = torch.tensor([LABEL_INDEX[e.label] for e, _ in train_items])

    rng = np.random.default_rng(config.seed)
    start_epoch = 0
    best_dev = float("inf")
    train_losses: list = []
    dev_eers: list = []
    if resume:
        state = torch.load(state_path, map_location="cpu", weights_only=False)
        detector.load_state_dict(state["detector"])
        optimizer.load_state_dict(state["optimizer"])
        rng.bit_generator.state = state["np_rng_state"]
        torch.set_rng_state(state["torch_rng_state"])
        start_epoch = state["epoch"] + 1
        best_dev = state["best_dev_eer"]
        train_losses = list(state["train_losses"])
        dev_eers = list(state["dev_eers"])

    t0 = time.monotonic()
    with log_path.open("a" if resume else "w", encoding="utf-8") as log:
        if not resume:
            log.write("# epoch train_loss dev_eer wallclock\n")
        for epoch in range(start_epoch, config.epochs):
            detector.train()
            order = rng.permutation(len(train_items))
            losses = []
            for start in range(0, len(order), config.batch_size):
                sel = order[start:start + config.batch_size]
                batch = torch.stack([
                    train_items[i][1][rng.integers(train_items[i][1].shape[0])]
                    for i in sel])
                logits = detector(batch)
                loss = weighted_ce_loss(logits, labels[sel], weights)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite training loss at epoch {epoch}; "
                        f"last good state kept at {state_path}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(float(loss.item()))
            train_loss = float(np.mean(losses))
            dev_eer = _dev_eer(detector, dev_items)
            train_losses.append(train_loss)
            dev_eers.append(dev_eer)
            log.write(f"{epoch} {train_loss:.6f} {dev_eer:.6f} {time.monotonic() - t0:.2f}\n")
            log.flush()
            if converter.param_hash() != frozen_hash:
                raise RuntimeError("frozen converter parameters changed during training")
            if dev_eer < best_dev:
                best_dev = dev_eer
                save_pipeline(best_path, Pipeline(converter, detector),
                              metadata={"seed": config.seed, "epoch": epoch,
                                        "dev_eer": dev_eer})
            checkpointing_state = {
                "detector": detector.state_dict(),
                "optimizer": optimizer.state_dict(),
                "np_rng_state": rng.bit_generator.state,
                "torch_rng_state": torch.get_rng_state(),
                "epoch": epoch,
                "best_dev_eer": best_dev,
                "train_losses": train_losses,
                "dev_eers": dev_eers,
                "seed": config.seed,
            }
            checkpointing.atomic_torch_save(checkpointing_state, state_path)
    if not best_path.exists():
        save_pipeline(best_path, Pipeline(converter, detector),
                      metadata={"seed": config.seed, "epoch": config.epochs - 1,
                                "dev_eer": dev_eers[-1] if dev_eers else float("nan")})
    return TrainResult(best_checkpoint=best_path, state_checkpoint=state_path,
                       log_path=log_path, train_losses=train_losses, dev_eers=dev_eers,
                       best_dev_eer=best_dev)
