"""
Synthetic repertoires with known tuning.

A :class:`GroundTruth` fixes a scale (cents above the tonic), a per-piece
transposition and a note sequence per piece. Rendering turns each note into
frames on the usual 256/44100 s grid with optional vibrato and Gaussian
jitter, separated by short unvoiced gaps. Everything is driven by ``seed``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .ingest import DEFAULT_FRAME_HOP, NoteEvent, PitchSeries, ScoreSequence


@dataclass(frozen=True)
class GroundTruth:
    tuning: tuple
    per_piece_offset: tuple
    note_sequences: tuple
    jitter_sd: float = 0.0
    vibrato: tuple = (0.0, 0.0)  # (depth cents, rate Hz)
    seed: int = 0
    tonic_hz: float = 196.0
    tonic_micromidi: int = 110
    piece_tunings: tuple | None = None  # per-piece degree positions, overrides tuning
    gap: float = 0.1
    frame_hop: float = DEFAULT_FRAME_HOP

    def __post_init__(self):
        tuning = tuple(float(x) for x in self.tuning)
        if any(b <= a for a, b in zip(tuning, tuning[1:])):
            raise ValueError("tuning must be strictly increasing")
        object.__setattr__(self, "tuning", tuning)
        object.__setattr__(self, "per_piece_offset", tuple(float(x) for x in self.per_piece_offset))
        object.__setattr__(self, "note_sequences", tuple(self.note_sequences))
        if len(self.per_piece_offset) != len(self.note_sequences):
            raise ValueError("need one offset per note sequence")
        if self.piece_tunings is not None:
            pts = tuple(tuple(float(x) for x in t) for t in self.piece_tunings)
            if len(pts) != len(self.note_sequences) or any(len(t) != len(tuning) for t in pts):
                raise ValueError("piece_tunings must be pieces x degrees")
            object.__setattr__(self, "piece_tunings", pts)
        notes = self.degree_notes
        if len(set(notes)) != len(notes):
            raise ValueError("two degrees share one notated micromidi value")

    @property
    def n_pieces(self):
        return len(self.note_sequences)

    @property
    def degree_notes(self):
        """Notated micromidi value of each degree (nearest 50-cent step)."""
        return tuple(self.tonic_micromidi + int(round(c / 50.0)) for c in self.tuning)

    def piece_tuning(self, i):
        return self.tuning if self.piece_tunings is None else self.piece_tunings[i]

    def expected_centers(self, i):
        """Degree positions of piece ``i`` in cents relative to ``tonic_hz``."""
        return [c + self.per_piece_offset[i] for c in self.piece_tuning(i)]

    def manifest(self):
        return {
            "tuning": list(self.tuning),
            "per_piece_offset": list(self.per_piece_offset),
            "piece_tunings": None if self.piece_tunings is None else [list(t) for t in self.piece_tunings],
            "degree_notes": list(self.degree_notes),
            "jitter_sd": self.jitter_sd,
            "vibrato": list(self.vibrato),
            "seed": self.seed,
            "tonic_hz": self.tonic_hz,
            "tonic_micromidi": self.tonic_micromidi,
            "gap": self.gap,
            "frame_hop": self.frame_hop,
            "pieces": [piece_id(i) for i in range(self.n_pieces)],
        }


def piece_id(i):
    return f"piece_{i:03d}"


@dataclass(frozen=True)
class SynthPiece:
    series: PitchSeries
    score: ScoreSequence
    frame_event: np.ndarray  # event index per frame, -1 in gaps
    target_cents: np.ndarray  # noiseless pitch per frame, NaN in gaps


def render_piece(gt, i):
    rng = np.random.default_rng([gt.seed, i])
    score = gt.note_sequences[i]
    degree_of = {n: k for k, n in enumerate(gt.degree_notes)}
    tuning = gt.piece_tuning(i)
    hop = gt.frame_hop
    gap_frames = int(round(gt.gap / hop))

    cum = np.concatenate(([0.0], np.cumsum(score.durations)))
    boundaries = np.round(cum / hop).astype(int)
    targets, events = [], []
    for j, ev in enumerate(score.events):
        n = boundaries[j + 1] - boundaries[j]
        if j > 0:
            targets.append(np.full(gap_frames, np.nan))
            events.append(np.full(gap_frames, -1))
        targets.append(np.full(n, tuning[degree_of[ev.note]] + gt.per_piece_offset[i]))
        events.append(np.full(n, j))
    target = np.concatenate(targets)
    frame_event = np.concatenate(events)
    times = np.arange(target.size) * hop

    cents = target.copy()
    depth, rate = gt.vibrato
    if depth:
        cents += depth * np.sin(2 * np.pi * rate * times)
    if gt.jitter_sd:
        cents += gt.jitter_sd * rng.standard_normal(cents.size)
    f0 = gt.tonic_hz * np.exp2(cents / 1200.0)
    series = PitchSeries(times, f0, frame_hop=hop, ref_hz=gt.tonic_hz)
    return SynthPiece(series, score, frame_event, target)


def generate_piece(gt, i):
    """Render piece ``i`` as (PitchSeries, ScoreSequence)."""
    p = render_piece(gt, i)
    return p.series, p.score


def inject_octave_error(s, start, end):
    """Shift voiced frames with ``start <= t < end`` up one octave."""
    if not (0 <= start < end <= s.duration):
        raise ValueError(f"invalid span [{start}, {end}) for a {s.duration:.3f} s series")
    sel = (s.times >= start) & (s.times < end) & s.voiced
    f0 = s.f0.copy()
    f0[sel] *= 2.0
    return s.with_f0(f0)


def random_sequence(rng, degree_notes, frames_per_degree, frame_hop=DEFAULT_FRAME_HOP,
                    weights=None, duration_range=(0.3, 1.0)):
    """Shuffled note sequence giving each degree roughly ``frames_per_degree * weight`` frames."""
    weights = np.ones(len(degree_notes)) if weights is None else np.asarray(weights, float)
    events = []
    for note, w in zip(degree_notes, weights):
        need = frames_per_degree * w * frame_hop
        got = 0.0
        while got < need:
            d = float(np.round(rng.uniform(*duration_range), 3))
            events.append(NoteEvent(note, d))
            got += d
    order = rng.permutation(len(events))
    return ScoreSequence(tuple(events[k] for k in order))


def make_repertoire(n_pieces, tuning, seed=0, offset_range=40.0, jitter_sd=15.0,
                    vibrato=(0.0, 0.0), frames_per_degree=2000, tonic_weight=2.0,
                    fluid=None, tonic_hz=196.0, tonic_micromidi=110, gap=0.1):
    """Build a :class:`GroundTruth` for ``n_pieces`` pieces sharing ``tuning``.

    Offsets are uniform in ``[-offset_range, offset_range]``. The tonic gets
    ``tonic_weight`` times the frames of other degrees so it is each piece's
    strongest peak. ``fluid`` maps a degree index to a (lo, hi) interval from
    which that degree's position is drawn independently per piece.
    """
    rng = np.random.default_rng(seed)
    tuning = [float(x) for x in tuning]
    offsets = rng.uniform(-offset_range, offset_range, n_pieces) if n_pieces else []
    proto = GroundTruth(tuning, [], [], tonic_micromidi=tonic_micromidi)
    weights = [tonic_weight] + [1.0] * (len(tuning) - 1)
    seqs = [random_sequence(rng, proto.degree_notes, frames_per_degree, weights=weights)
            for _ in range(n_pieces)]
    piece_tunings = None
    if fluid:
        piece_tunings = []
        for _ in range(n_pieces):
            t = list(tuning)
            for k, (lo, hi) in sorted(fluid.items()):
                t[k] = float(rng.uniform(lo, hi))
            piece_tunings.append(t)
    return GroundTruth(
        tuning=tuning, per_piece_offset=[float(np.round(o, 6)) for o in offsets],
        note_sequences=seqs, jitter_sd=jitter_sd, vibrato=tuple(vibrato), seed=seed,
        tonic_hz=tonic_hz, tonic_micromidi=tonic_micromidi, piece_tunings=piece_tunings, gap=gap,
    )


def write_corpus(gt, out_dir, jobs=1):
    """Write ``<id>.f0.csv``, ``<id>.notes.csv`` per piece plus ``ground_truth.json``."""
    os.makedirs(out_dir, exist_ok=True)

    def one(i):
        series, score = generate_piece(gt, i)
        base = os.path.join(out_dir, piece_id(i))
        with open(base + ".f0.csv", "w", newline="\n") as fh:
            fh.write(series.to_csv())
        with open(base + ".notes.csv", "w", newline="\n") as fh:
            fh.write("micromidi,duration\n" + score.to_csv())

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as ex:
            list(ex.map(one, range(gt.n_pieces)))
    else:
        for i in range(gt.n_pieces):
            one(i)
    with open(os.path.join(out_dir, "ground_truth.json"), "w") as fh:
        json.dump(gt.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [piece_id(i) for i in range(gt.n_pieces)]
