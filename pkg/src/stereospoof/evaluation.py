"""Trial scoring, equal error rate, and per-attack breakdown reports.

EER convention (shared with the brute-force oracle in the test suite so
equivalence is exact):

* candidate thresholds are the midpoints of adjacent sorted unique scores,
  plus -inf and +inf;
* FRR(t) is the fraction of bonafide scores strictly below t, FAR(t) the
  fraction of spoof scores at or above t;
* scanning thresholds upward, FAR - FRR is non-increasing; the EER is FRR at
  the first threshold where the difference is exactly zero, otherwise the
  linear interpolation between the two bracketing operating points.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import BONAFIDE, SPOOF, TrialProtocol
from .errors import AudioReadError, ValidationError


@dataclass(frozen=True)
class ScoreRow:
    utterance_id: str
    attack_id: str
    label: str
    score: float


@dataclass
class ScoreFile:
    rows: list[ScoreRow] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    def bona_scores(self) -> np.ndarray:
        return np.array([r.score for r in self.rows if r.label == BONAFIDE], dtype=np.float64)

    def spoof_scores(self) -> np.ndarray:
        return np.array([r.score for r in self.rows if r.label == SPOOF], dtype=np.float64)


def utterance_seed(seed: int, utterance_id: str) -> list[int]:
    """Stable per-utterance seed stream for conditioning sampling."""
    return [int(seed), zlib.crc32(utterance_id.encode("utf-8"))]


def _operating_points(bona: np.ndarray, spoof: np.ndarray):
    scores = np.unique(np.concatenate([bona, spoof]))
    mids = (scores[:-1] + scores[1:]) / 2.0
    thresholds = np.concatenate([[-np.inf], mids, [np.inf]])
    bona_sorted = np.sort(bona)
    spoof_sorted = np.sort(spoof)
    frr = np.searchsorted(bona_sorted, thresholds, side="left") / bona.size
    far = (spoof.size - np.searchsorted(spoof_sorted, thresholds, side="left")) / spoof.size
    return thresholds, frr, far


def compute_eer(bona, spoof) -> tuple[float, float]:
    """Equal error rate and its threshold for bonafide-high scores."""
    bona = np.asarray(bona, dtype=np.float64)
    spoof = np.asarray(spoof, dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise ValidationError("compute_eer needs at least one score of each class")
    if not (np.isfinite(bona).all() and np.isfinite(spoof).all()):
        raise ValidationError("scores must be finite")
    thresholds, frr, far = _operating_points(bona, spoof)
    lo = float(min(bona.min(), spoof.min())) - 1.0
    hi = float(max(bona.max(), spoof.max())) + 1.0
    finite = np.clip(thresholds, lo, hi)
    diff = far - frr
    zero = np.flatnonzero(diff == 0.0)
    if zero.size:
        i = int(zero[0])
        return float(frr[i]), float(finite[i])
    i = int(np.flatnonzero(diff > 0.0)[-1])
    lam = diff[i] / (diff[i] - diff[i + 1])
    eer = frr[i] + lam * (frr[i + 1] - frr[i])
    threshold = finite[i] + lam * (finite[i + 1] - finite[i])
    return float(eer), float(threshold)


def roc_points(bona, spoof) -> np.ndarray:
    """Operating points [threshold, frr, far] over the full sweep."""
    bona = np.asarray(bona, dtype=np.float64)
    spoof = np.asarray(spoof, dtype=np.float64)
    thresholds, frr, far = _operating_points(bona, spoof)
    return np.column_stack([thresholds, frr, far])


def score_trials(pipeline, protocol: TrialProtocol, audio_store, pool, seed: int,
                 ablation: str | None = None) -> ScoreFile:
    """Score every protocol trial; per-trial failures are recorded, not fatal."""
    out = ScoreFile()
    for entry in protocol.entries:
        try:
            w = audio_store.load(entry.utterance_id)
            score = pipeline.score(w, pool, seed=utterance_seed(seed, entry.utterance_id),
                                   ablation=ablation)
        except (FileNotFoundError, AudioReadError, ValidationError) as exc:
            out.errors.append((entry.utterance_id, str(exc)))
            continue
        out.rows.append(ScoreRow(entry.utterance_id, entry.attack_id, entry.label, score))
    return out


def write_scorefile(sf: ScoreFile, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in sf.rows:
            fh.write(f"{r.utterance_id} {r.attack_id} {r.label} {r.score!r}\n")


def load_scorefile(path) -> ScoreFile:
    sf = ScoreFile()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 4:
                raise ValidationError(f"{path}:{line_no}: expected 4 fields, got {len(tokens)}")
            sf.rows.append(ScoreRow(tokens[0], tokens[1], tokens[2], float(tokens[3])))
    return sf


@dataclass
class AttackReport:
    attack_rows: list[tuple[str, int, float, float]]  # (attack, n_trials, eer, threshold)
    pooled: tuple[int, int, float, float] | None      # (n_bona, n_spoof, eer, threshold)
    notes: list[str] = field(default_factory=list)


def per_attack_report(sf: ScoreFile, known_attacks: list[str] | None = None) -> AttackReport:
    """EER per attack (each attack's spoofs against all bonafide) plus pooled EER."""
    bona = sf.bona_scores()
    if bona.size == 0:
        raise ValidationError("score file contains no bonafide rows")
    by_attack: dict[str, list[float]] = {}
    for r in sf.rows:
        if r.label == SPOOF:
            by_attack.setdefault(r.attack_id, []).append(r.score)
    notes = []
    for attack in known_attacks or []:
        if attack not in by_attack:
            notes.append(f"attack {attack}: zero trials, omitted")
    attack_rows = []
    for attack in sorted(by_attack):
        scores = np.array(by_attack[attack])
        eer, thr = compute_eer(bona, scores)
        attack_rows.append((attack, int(scores.size), eer, thr))
    pooled = None
    spoof = sf.spoof_scores()
    if spoof.size:
        eer, thr = compute_eer(bona, spoof)
        pooled = (int(bona.size), int(spoof.size), eer, thr)
    else:
        notes.append("no spoof rows: pooled EER omitted")
    return AttackReport(attack_rows=attack_rows, pooled=pooled, notes=notes)


def render_report_text(report: AttackReport) -> str:
    """Aligned text table; EER printed as percent with two decimals."""
    lines = [f"{'attack':<10}{'trials':>8}{'EER%':>10}{'threshold':>14}"]
    for attack, n, eer, thr in report.attack_rows:
        lines.append(f"{attack:<10}{n:>8}{100 * eer:>10.2f}{thr:>14.4f}")
    if report.pooled is not None:
        n_bona, n_spoof, eer, thr = report.pooled
        lines.append(f"{'pooled':<10}{n_spoof:>8}{100 * eer:>10.2f}{thr:>14.4f}")
        lines.append(f"(bonafide trials: {n_bona})")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def render_report_tsv(report: AttackReport) -> str:
    lines = ["attack\tn_trials\teer\tthreshold"]
    for attack, n, eer, thr in report.attack_rows:
        lines.append(f"{attack}\t{n}\t{eer!r}\t{thr!r}")
    if report.pooled is not None:
        n_bona, n_spoof, eer, thr = report.pooled
        lines.append(f"pooled\t{n_spoof}\t{eer!r}\t{thr!r}")
    return "\n".join(lines) + "\n"
