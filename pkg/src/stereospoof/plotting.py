"""Figure rendering: spectrogram comparison grids and evaluation report plots.

All figures are written to files (Agg backend); the evaluation report figure
is emitted alongside the delimited report so a run leaves both machine- and
human-readable artifacts.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import ValidationError  # noqa: E402


def log_spectrogram(x: np.ndarray, sr: int, win_ms: float = 25.0, hop_ms: float = 10.0):
    """Log-magnitude STFT with a Hann window.

    Returns (spectrogram_db [freq_bins, frames], freqs_hz, frame_times_s).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    win = int(round(sr * win_ms / 1000.0))
    hop = int(round(sr * hop_ms / 1000.0))
    if x.size < win:
        raise ValidationError(f"signal of {x.size} samples is shorter than one "
                              f"{win}-sample analysis window")
    window = np.hanning(win)
    n_frames = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    spec = np.abs(np.fft.rfft(frames, axis=1)).T
    spec_db = 20.0 * np.log10(spec + 1e-10)
    freqs = np.fft.rfftfreq(win, d=1.0 / sr)
    times = (np.arange(n_frames) * hop + win / 2) / sr
    return spec_db, freqs, times


def spectrogram_grid(rows, sr: int, out_path, win_ms: float = 25.0, hop_ms: float = 10.0):
    """Grid of log spectrograms, one row per (row_label, [(panel_label, signal), ...]).

    All panels share one color scale so identical signals render identically.
    """
    panels = []
    for row_label, row in rows:
        panels.append([(label, *log_spectrogram(sig, sr, win_ms, hop_ms))
                       for label, sig in row])
    vmin = min(s.min() for row in panels for _, s, _, _ in row)
    vmax = max(s.max() for row in panels for _, s, _, _ in row)
    n_rows = len(panels)
    n_cols = max(len(row) for row in panels)
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(4 * n_cols, 3 * n_rows),
                             squeeze=False, constrained_layout=True)
    image = None
    for r, ((row_label, _), row) in enumerate(zip(rows, panels)):
        for c, (label, spec_db, freqs, times) in enumerate(row):
            ax = axes[r][c]
            image = ax.imshow(spec_db, origin="lower", aspect="auto",
                              extent=(times[0], times[-1], freqs[0], freqs[-1]),
                              vmin=vmin, vmax=vmax, cmap="magma")
            ax.set_title(f"{row_label}: {label}")
            ax.set_xlabel("time [s]")
            ax.set_ylabel("frequency [Hz]")
        for c in range(len(row), n_cols):
            axes[r][c].axis("off")
    fig.colorbar(image, ax=axes, shrink=0.8, label="magnitude [dB]")
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def report_figure(report, score_file, out_path):
    """Score distributions and per-attack EER bars for one evaluation run."""
    bona = score_file.bona_scores()
    spoof = score_file.spoof_scores()
    fig, (ax_hist, ax_bar) = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    bins = np.histogram_bin_edges(np.concatenate([bona, spoof]), bins=20)
    ax_hist.hist(bona, bins=bins, alpha=0.6, label="bonafide")
    ax_hist.hist(spoof, bins=bins, alpha=0.6, label="spoof")
    ax_hist.set_xlabel("score (bonafide logit - spoof logit)")
    ax_hist.set_ylabel("trials")
    ax_hist.set_title("score distributions")
    ax_hist.legend()

    labels = [attack for attack, _, _, _ in report.attack_rows]
    values = [100.0 * eer for _, _, eer, _ in report.attack_rows]
    if report.pooled is not None:
        labels.append("pooled")
        values.append(100.0 * report.pooled[2])
    ax_bar.bar(labels, values, color="steelblue")
    ax_bar.set_ylabel("EER [%]")
    ax_bar.set_title("equal error rate by attack")
    ax_bar.tick_params(axis="x", rotation=45)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def pretrain_loss_figure(history, out_path):
    """Converter pretraining loss curve."""
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.plot(range(len(history)), history, marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("L2 loss")
    ax.set_title("converter pretraining")
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
