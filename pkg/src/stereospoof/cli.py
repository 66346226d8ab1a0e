"""Command-line entry point.

Subcommands: ``fixtures``, ``pretrain-m2s``, ``convert``, ``train``, ``eval``,
``visualize``.  Shared flags are ``--config PATH``, ``--seed INT`` and
``--out DIR``; config keys can also be overridden with ``-o key=value`` or
environment variables prefixed ``STEREOSPOOF_`` (file < env < -o).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

from . import dataio, evaluation, plotting, training
from .binauralizer import Binauralizer, BinauralizerConfig, binauralize_utterance, \
    desk_binauralizer_config, pretrain
from .errors import ValidationError
from .model import DetectorConfig, desk_detector_config, load_binauralizer, \
    load_pipeline, save_binauralizer
from .training import gather_config_values


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {raw!r}")


@dataclass
class PretrainConfig:
    epochs: int = 100
    batch_size: int = 4
    learning_rate: float = 1e-3
    seed: int = 1234
    chunk_length: int = 16000
    phase_loss: bool = False


PRETRAIN_COERCERS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "seed": int,
    "chunk_length": int,
    "phase_loss": _parse_bool,
}


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _binauralizer_config(preset: str, sr: int) -> BinauralizerConfig:
    return BinauralizerConfig() if preset == "full" else desk_binauralizer_config()


def _detector_config(preset: str) -> DetectorConfig:
    return DetectorConfig() if preset == "full" else desk_detector_config()


def cmd_fixtures(args) -> int:
    manifest = dataio.write_fixture_tree(
        args.out, seed=args.seed, n_utts=args.n_utts, sr=args.sr,
        class_ratio=args.class_ratio, utt_length=args.utt_length,
        n_pretrain=args.n_pretrain, pretrain_length=args.pretrain_length)
    for subset, info in manifest["subsets"].items():
        print(f"{subset}: {info['n_utts']} utterances -> {info['audio_dir']}")
    print(f"pretraining items: {len(manifest['pretrain'])}")
    print(f"fixture corpus written under {args.out}")
    return 0


def cmd_pretrain_m2s(args) -> int:
    cfg = PretrainConfig(**gather_config_values(PRETRAIN_COERCERS, args.config, args.override))
    if args.seed is not None:
        cfg.seed = args.seed
    items = dataio.load_pretrain_corpus(args.corpus, sr=args.sr)
    training.set_global_seed(cfg.seed)
    model = Binauralizer(_binauralizer_config(args.preset, args.sr))
    t0 = time.monotonic()
    history = pretrain(model, items, epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                       batch_size=cfg.batch_size, seed=cfg.seed,
                       chunk_length=cfg.chunk_length, phase_loss=cfg.phase_loss)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_lines = [f"{epoch} {loss!r}" for epoch, loss in enumerate(history)]
    _atomic_write_text(out / "pretrain_log.txt", "\n".join(log_lines) + "\n")
    ckpt = save_binauralizer(out / "binauralizer.ckpt", model,
                             metadata={"seed": cfg.seed, "epochs": cfg.epochs,
                                       "final_loss": history[-1]})
    plotting.pretrain_loss_figure(history, out / "pretrain_loss.png")
    print(f"pretrained converter: {ckpt} (final loss {history[-1]:.6f}, "
          f"{time.monotonic() - t0:.1f}s)")
    return 0


def cmd_convert(args) -> int:
    model = load_binauralizer(args.checkpoint)
    model.freeze()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    wavs = sorted(Path(args.input).glob("*.wav"))
    if not wavs:
        print(f"error: no .wav files under {args.input}", file=sys.stderr)
        return 1
    manifest = ["input\toutput\tstatus\tlength"]
    failures = 0
    for path in wavs:
        try:
            w = dataio.load_waveform(path, expected_sr=None)
            if w.channels != 1:
                raise ValidationError(f"{path.name}: expected mono input, got {w.channels} channels")
            pool = dataio.load_conditioning_pool(args.conditioning, expected_sr=w.sample_rate)
            seed = [args.seed, zlib.crc32(path.stem.encode("utf-8"))]
            stereo = binauralize_utterance(model, w, pool, seed=seed)
            out_path = out_dir / path.name
            dataio.save_waveform(stereo, out_path)
            manifest.append(f"{path.name}\t{out_path.name}\tok\t{stereo.length}")
        except Exception as exc:  # keep converting remaining files
            failures += 1
            manifest.append(f"{path.name}\t-\terror: {exc}\t-")
    _atomic_write_text(out_dir / "manifest.tsv", "\n".join(manifest) + "\n")
    print(f"converted {len(wavs) - failures}/{len(wavs)} files -> {out_dir}")
    return 1 if failures else 0


class _SplitAudioStore:
    """Routes utterance lookups to per-subset stores by trying each in turn."""

    def __init__(self, stores):
        self.stores = stores

    def load(self, utterance_id):
        for store in self.stores[:-1]:
            try:
                return store.load(utterance_id)
            except FileNotFoundError:
                continue
        return self.stores[-1].load(utterance_id)


def cmd_train(args) -> int:
    protocol = dataio.parse_protocol(args.protocol, subset="train")
    dev_protocol = dataio.parse_protocol(args.dev_protocol, subset="dev")
    detector_config = _detector_config(args.preset)
    sr = detector_config.sample_rate
    store = dataio.DirAudioStore(args.audio_dir, sample_rate=sr)
    if args.dev_audio_dir is not None:
        store = _SplitAudioStore([store, dataio.DirAudioStore(args.dev_audio_dir, sample_rate=sr)])
    pool = dataio.load_conditioning_pool(args.conditioning,
                                         expected_sr=detector_config.sample_rate)
    converter = load_binauralizer(args.m2s_checkpoint)
    config = training.load_train_config(args.config, args.override)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.checkpoint_dir = args.out
    result = training.train(config, protocol, dev_protocol, store, pool, converter,
                            detector_config=detector_config, resume=args.resume)
    print(f"best dev EER {100 * result.best_dev_eer:.2f}% -> {result.best_checkpoint}")
    print(f"log: {result.log_path}")
    return 0


def cmd_eval(args) -> int:
    pipeline = load_pipeline(args.checkpoint)
    protocol = dataio.parse_protocol(args.protocol, subset=args.subset)
    sr = pipeline.detector.config.sample_rate
    store = dataio.DirAudioStore(args.audio_dir, sample_rate=sr)
    pool = dataio.load_conditioning_pool(args.conditioning, expected_sr=sr)
    sf = evaluation.score_trials(pipeline, protocol, store, pool, seed=args.seed,
                                 ablation=args.ablation)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{r.utterance_id} {r.attack_id} {r.label} {r.score!r}" for r in sf.rows]
    _atomic_write_text(out_dir / "scores.txt", "\n".join(lines) + "\n" if lines else "")
    report = evaluation.per_attack_report(sf)
    text = evaluation.render_report_text(report)
    _atomic_write_text(out_dir / "report.txt", text)
    _atomic_write_text(out_dir / "report.tsv", evaluation.render_report_tsv(report))
    points = evaluation.roc_points(sf.bona_scores(), sf.spoof_scores())
    roc_lines = ["threshold\tfrr\tfar"] + [f"{t!r}\t{frr!r}\t{far!r}" for t, frr, far in points]
    _atomic_write_text(out_dir / "roc_points.tsv", "\n".join(roc_lines) + "\n")
    plotting.report_figure(report, sf, out_dir / "report.png")
    print(text, end="")
    for utt, msg in sf.errors:
        print(f"error: {utt}: {msg}", file=sys.stderr)
    return 1 if sf.errors else 0


def cmd_visualize(args) -> int:
    bona = dataio.load_waveform(args.bonafide, expected_sr=args.sr)
    fake = dataio.load_waveform(args.spoof, expected_sr=args.sr)
    bona_stereo = dataio.load_waveform(args.bonafide_stereo, expected_sr=args.sr)
    fake_stereo = dataio.load_waveform(args.spoof_stereo, expected_sr=args.sr)
    for name, w, want in (("bonafide", bona, 1), ("spoof", fake, 1),
                          ("bonafide-stereo", bona_stereo, 2), ("spoof-stereo", fake_stereo, 2)):
        if w.channels != want:
            raise ValidationError(f"{name}: expected {want} channel(s), got {w.channels}")
    rows = [
        ("bonafide", [("mono", bona.samples[0]),
                      ("stereo L", bona_stereo.samples[0]),
                      ("stereo R", bona_stereo.samples[1])]),
        ("fake", [("mono", fake.samples[0]),
                  ("stereo L", fake_stereo.samples[0]),
                  ("stereo R", fake_stereo.samples[1])]),
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plotting.spectrogram_grid(rows, sr=args.sr, out_path=out)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereospoof",
        description="Audio deepfake detection via mono-to-stereo conversion. "
                    "Config keys may be overridden by STEREOSPOOF_* environment "
                    "variables or -o key=value.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="generate the synthetic fixture corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--n-utts", type=int, default=8)
    p.add_argument("--sr", type=int, default=16000)
    p.add_argument("--class-ratio", type=float, default=0.5)
    p.add_argument("--utt-length", type=int, default=dataio.SEGMENT_LENGTH)
    p.add_argument("--n-pretrain", type=int, default=4)
    p.add_argument("--pretrain-length", type=int, default=16000)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("pretrain-m2s", help="pretrain the mono-to-stereo converter")
    p.add_argument("--corpus", required=True,
                   help="directory of <id>/{mono.wav,binaural.wav,conditioning.txt}")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sr", type=int, default=16000)
    p.add_argument("--preset", choices=("full", "desk"), default="full")
    p.set_defaults(func=cmd_pretrain_m2s)

    p = sub.add_parser("convert", help="convert mono wav files to stereo")
    p.add_argument("--input", required=True, help="directory of mono .wav files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--conditioning", required=True, help="directory of conditioning tracks")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1234)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train the detector on converted stereo")
    p.add_argument("--protocol", required=True)
    p.add_argument("--dev-protocol", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--dev-audio-dir", default=None,
                   help="audio directory for the dev protocol (defaults to --audio-dir)")
    p.add_argument("--conditioning", required=True)
    p.add_argument("--m2s-checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="checkpoint directory")
    p.add_argument("--preset", choices=("full", "desk"), default="full")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a protocol and report EER")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--conditioning", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--subset", choices=dataio.SUBSETS, default="eval")
    p.add_argument("--ablation", choices=("left", "right"), default=None,
                   help="score through the single-branch ablation path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("visualize", help="spectrogram grid: mono vs stereo, bonafide vs fake")
    p.add_argument("--bonafide", required=True)
    p.add_argument("--spoof", required=True)
    p.add_argument("--bonafide-stereo", required=True)
    p.add_argument("--spoof-stereo", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sr", type=int, default=16000)
    p.set_defaults(func=cmd_visualize)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
