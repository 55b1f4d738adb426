"""End-to-end composition of the per-piece stages and the repertoire tuning."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import align, histogram, tuning
from .histogram import HistogramConfig
from .ingest import OctavePolicy, correct_octave_errors

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignConfig:
    band: object = "auto"
    cost_cap: float = 600.0
    dominance: float = 0.8
    min_share: float = 0.2


@dataclass(frozen=True)
class TuningConfig:
    link_threshold: float = 50.0
    n: int = 1000
    l: int | None = None
    min_support: int = 1
    fluid_stdev: float = 12.0


@dataclass
class PieceResult:
    piece_id: str
    series: object
    histogram: histogram.Histogram
    peaks: list
    score: object = None
    anchor: tuple | None = None
    path: align.AlignmentPath | None = None
    note_hists: align.NoteHistogramSet | None = None
    refined: list | None = None
    notes: list = field(default_factory=list)

    @property
    def final_peaks(self):
        return self.refined if self.refined is not None else self.peaks


def analyze_piece(piece_id, series, score=None, hcfg=None, acfg=None, octave=None,
                  anchor_reference=True):
    """Correct octaves, detect peaks, and (with a score) align and refine."""
    hcfg = HistogramConfig() if hcfg is None else hcfg
    acfg = AlignConfig() if acfg is None else acfg
    if octave is not None:
        series = correct_octave_errors(series, octave)
    if anchor_reference and series.ref_hz is None:
        series = histogram.anchor_reference(series, hcfg)
    h, peaks = histogram.detect_peaks(series, hcfg)
    result = PieceResult(piece_id, series, h, peaks, score=score)
    if score is None or score.absent or not peaks:
        if score is not None and score.absent:
            result.notes.append("score absent")
        return result
    anchor = align.default_anchor(score, peaks)
    expected = align.score_to_cents(score, anchor)
    peaks = histogram.classify_all(h, peaks, sorted(set(expected.tolist())), hcfg)
    path = align.dtw_align(series, expected, score.durations, acfg.band, acfg.cost_cap)
    nhs = align.note_histograms(series, path, score, hcfg.bin_width)
    refined = align.refine_peaks(peaks, nhs, anchor, hcfg, acfg.dominance, acfg.min_share)
    result.peaks, result.anchor, result.path, result.note_hists, result.refined = (
        peaks, anchor, path, nhs, refined)
    return result


@dataclass
class RepertoireResult:
    pieces: list
    matrix: tuning.PitchMatrix
    optimized: tuning.OptimizeResult
    tuning: tuning.Tuning


def tune_repertoire(pieces, tcfg=None):
    """Assemble, optimise and derive the tuning from analysed pieces."""
    tcfg = TuningConfig() if tcfg is None else tcfg
    peak_sets = [p.final_peaks for p in pieces]
    matrix = tuning.assemble_matrix(peak_sets, tcfg.link_threshold, [p.piece_id for p in pieces])
    opt = tuning.optimize(matrix, tcfg.n, tcfg.l)
    fixed = tuning.gauge_fix(opt.matrix)
    opt = tuning.OptimizeResult(fixed, opt.trace, opt.shifts)
    labels = _column_labels(pieces, matrix)
    result = tuning.derive_tuning(fixed, tcfg.min_support, labels, tcfg.fluid_stdev)
    return RepertoireResult(pieces, matrix, opt, result)


def _column_labels(pieces, matrix):
    """Name columns after the notated pitch whose expected cents land nearest.

    Only pieces with an alignment anchor vote; the label is the most common
    note name per column.
    """
    from .ingest import micromidi_to_name

    by_id = {p.piece_id: p for p in pieces}
    votes = {}
    for r, pid in enumerate(matrix.piece_ids):
        p = by_id[pid]
        if p.anchor is None or not p.final_peaks:
            continue
        note0, cents0 = p.anchor
        heaviest = max(p.final_peaks, key=lambda q: q.mass).center
        for j in np.flatnonzero(matrix.mask[r]):
            center = matrix.values[r, j] + heaviest
            note = int(round(note0 + (center - cents0) / 50.0))
            try:
                name = micromidi_to_name(note)
            except ValueError:
                continue
            votes.setdefault(int(j), {}).setdefault(name, 0)
            votes[int(j)][name] += 1
    return {j: max(sorted(v), key=lambda k: v[k]) for j, v in votes.items()}


def analyze_many(items, hcfg=None, acfg=None, jobs=1):
    """Run :func:`analyze_piece` over ``(piece_id, series, score, octave)`` tuples."""
    def run(item):
        pid, series, score, octave = item
        return analyze_piece(pid, series, score, hcfg, acfg, octave)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(run, items))
    return [run(it) for it in items]
