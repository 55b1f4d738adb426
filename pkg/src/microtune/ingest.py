"""
Reading pitch traces and microtonal note tables.

F0 traces arrive as ``time,frequency`` CSV rows written by an upstream pitch
tracker. Scores arrive as ``micromidi,duration`` rows where the note number
uses doubled MIDI resolution: each unit is 50 cents, so an odd number sits a
quarter tone between two chromatic pitches (koron below, sori above).
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

#: Analysis grid used for the reference recordings: hop of 256 samples at 44.1 kHz.
DEFAULT_SAMPLE_RATE = 44100
DEFAULT_STEP_SIZE = 256
DEFAULT_FRAME_HOP = DEFAULT_STEP_SIZE / DEFAULT_SAMPLE_RATE

MICROMIDI_MIN = 40
MICROMIDI_MAX = 200
CENTS_PER_UNIT = 50.0

NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
_NATURALS = {0, 2, 4, 5, 7, 9, 11}


class FormatError(ValueError):
    """Malformed CSV input; ``row`` is the 1-based line number when known."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# cents


def hz_to_cents(f, ref_hz):
    """Interval from ``ref_hz`` up to ``f`` in cents (1200 per octave).

    Broadcasts over arrays; raises ``ValueError`` on non-positive input.
    """
    f = np.asarray(f, dtype=float)
    ref_hz = np.asarray(ref_hz, dtype=float)
    if np.any(~(f > 0)) or np.any(~(ref_hz > 0)):
        raise ValueError("frequencies must be positive")
    out = 1200.0 * np.log2(f / ref_hz)
    return float(out) if out.ndim == 0 else out


def cents_to_hz(c, ref_hz):
    ref_hz = np.asarray(ref_hz, dtype=float)
    if np.any(~(ref_hz > 0)):
        raise ValueError("reference frequency must be positive")
    out = ref_hz * np.exp2(np.asarray(c, dtype=float) / 1200.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# pitch series


@dataclass(frozen=True)
class PitchSeries:
    """Frame-level F0 trace.

    ``f0`` holds Hz for voiced frames and NaN for unvoiced ones. ``ref_hz`` is
    the origin of the cents axis; when it is ``None`` the series has not been
    anchored yet and :attr:`cents` uses :data:`PROVISIONAL_REF_HZ`.
    """

    times: np.ndarray
    f0: np.ndarray
    frame_hop: float = DEFAULT_FRAME_HOP
    ref_hz: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        f0 = np.asarray(self.f0, dtype=float)
        if times.shape != f0.shape or times.ndim != 1:
            raise ValueError("times and f0 must be 1-D arrays of equal length")
        if times.size and (np.any(times < 0) or np.any(np.diff(times) <= 0)):
            raise ValueError("times must be non-negative and strictly increasing")
        if not self.frame_hop > 0:
            raise ValueError("frame_hop must be positive")
        if self.ref_hz is not None and not self.ref_hz > 0:
            raise ValueError("ref_hz must be positive")
        f0 = np.where(np.isfinite(f0) & (f0 > 0), f0, np.nan)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "f0", f0)

    def __len__(self):
        return self.times.size

    @property
    def voiced(self):
        return ~np.isnan(self.f0)

    @property
    def n_voiced(self):
        return int(self.voiced.sum())

    @property
    def reference(self):
        return PROVISIONAL_REF_HZ if self.ref_hz is None else self.ref_hz

    @property
    def cents(self):
        """Cents relative to the reference for every frame; NaN where unvoiced."""
        out = np.full(self.f0.shape, np.nan)
        v = self.voiced
        out[v] = 1200.0 * np.log2(self.f0[v] / self.reference)
        return out

    def voiced_cents(self):
        return self.cents[self.voiced]

    def with_reference(self, ref_hz):
        return replace(self, ref_hz=float(ref_hz))

    def with_f0(self, f0):
        return replace(self, f0=np.asarray(f0, dtype=float))

    @property
    def duration(self):
        return float(self.times[-1] + self.frame_hop) if self.times.size else 0.0

    def to_csv(self):
        buf = io.StringIO()
        buf.write("time,frequency\n")
        for t, f in zip(self.times, self.f0):
            buf.write(f"{t:.9f},{0.0 if np.isnan(f) else f:.9f}\n")
        return buf.getvalue()


PROVISIONAL_REF_HZ = 440.0


def _text(data):
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8-sig")
    elif hasattr(data, "read"):
        data = data.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8-sig")
    return data.lstrip("﻿")


def _rows(text):
    """Yield (line_number, fields) for non-blank CSV rows."""
    for lineno, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not fields or all(not x.strip() for x in fields):
            continue
        yield lineno, [x.strip() for x in fields]


def _is_header(fields):
    """A header row has no numeric field at all."""
    for x in fields:
        try:
            float(x)
            return False
        except ValueError:
            pass
    return True


def _infer_hop(times):
    if times.size < 2:
        return DEFAULT_FRAME_HOP
    return float(np.median(np.diff(times)))


def parse_f0_csv(data, frame_hop=None, ref_hz=None):
    """Parse ``time,frequency`` rows into a :class:`PitchSeries`.

    A header line is optional. Frequencies that are empty, NaN or <= 0 mark
    unvoiced frames. ``frame_hop`` defaults to the median time step.
    """
    times, freqs = [], []
    last_t = -math.inf
    for lineno, fields in _rows(_text(data)):
        if not times and lineno == 1 and _is_header(fields):
            continue
        if len(fields) < 2:
            raise FormatError("expected time,frequency", lineno)
        try:
            t = float(fields[0])
        except ValueError:
            raise FormatError(f"unparsable time {fields[0]!r}", lineno) from None
        if not math.isfinite(t) or t < 0:
            raise FormatError(f"invalid time {fields[0]!r}", lineno)
        if t <= last_t:
            raise FormatError("time values must strictly increase", lineno)
        last_t = t
        raw = fields[1]
        if raw == "":
            f = math.nan
        else:
            try:
                f = float(raw)
            except ValueError:
                raise FormatError(f"unparsable frequency {raw!r}", lineno) from None
        times.append(t)
        freqs.append(f if math.isfinite(f) and f > 0 else math.nan)
    times = np.array(times, dtype=float)
    hop = _infer_hop(times) if frame_hop is None else frame_hop
    return PitchSeries(times, np.array(freqs, dtype=float), frame_hop=hop, ref_hz=ref_hz)


# ---------------------------------------------------------------------------
# microtonal notes


def micromidi_to_name(m):
    """Name a doubled-resolution MIDI number, e.g. 110 -> 'G2', 113 -> 'A2-koron'.

    Octave numbering puts MIDI 60 at C3. Odd values are spelled as the sori of
    the natural below when there is one, otherwise as the koron of the natural
    above.
    """
    m = _check_range(m)
    if m % 2 == 0:
        return _chromatic_name(m // 2)
    below = (m - 1) // 2
    if below % 12 in _NATURALS:
        return _chromatic_name(below) + "-sori"
    return _chromatic_name(below + 1) + "-koron"


_NAME_RE = re.compile(r"^([A-G])(#?)(-?\d+)(?:-(sori|koron))?$")


def name_to_micromidi(name):
    """Inverse of :func:`micromidi_to_name`.

    Also accepts non-canonical quarter-tone spellings such as 'F2-koron'.
    """
    match = _NAME_RE.match(name.strip())
    if match is None:
        raise ValueError(f"unrecognized note name {name!r}")
    letter, sharp, octave, accidental = match.groups()
    pc = NOTE_NAMES.index(letter + sharp)
    m = 2 * ((int(octave) + 2) * 12 + pc)
    if accidental == "sori":
        m += 1
    elif accidental == "koron":
        m -= 1
    return _check_range(m)


def _chromatic_name(midi):
    return f"{NOTE_NAMES[midi % 12]}{midi // 12 - 2}"


def _check_range(m):
    if int(m) != m:
        raise ValueError(f"micromidi value must be an integer, got {m!r}")
    m = int(m)
    if not MICROMIDI_MIN <= m <= MICROMIDI_MAX:
        raise ValueError(f"micromidi {m} outside [{MICROMIDI_MIN}, {MICROMIDI_MAX}]")
    return m


@dataclass(frozen=True)
class NoteEvent:
    note: int
    duration: float

    def __post_init__(self):
        _check_range(self.note)
        if not self.duration > 0:
            raise ValueError("note duration must be positive")

    @property
    def name(self):
        return micromidi_to_name(self.note)


@dataclass(frozen=True)
class ScoreSequence:
    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def absent(self):
        """True for an empty score ("score absent")."""
        return not self.events

    @property
    def notes(self):
        return np.array([e.note for e in self.events], dtype=int)

    @property
    def durations(self):
        return np.array([e.duration for e in self.events], dtype=float)

    @property
    def total_duration(self):
        return float(sum(e.duration for e in self.events))

    def modal_note(self):
        """Note with the largest total duration; ties go to the lower note."""
        if self.absent:
            raise ValueError("score absent")
        totals = {}
        for e in self.events:
            totals[e.note] = totals.get(e.note, 0.0) + e.duration
        return max(sorted(totals), key=lambda n: totals[n])

    def to_csv(self):
        return "".join(f"{e.note},{e.duration!r}\n" for e in self.events)


def parse_note_table(data):
    """Parse ``micromidi,duration_seconds`` rows into a :class:`ScoreSequence`."""
    events = []
    for lineno, fields in _rows(_text(data)):
        if not events and lineno == 1 and _is_header(fields):
            continue
        if len(fields) < 2:
            raise FormatError("expected micromidi,duration", lineno)
        try:
            note = int(fields[0])
        except ValueError:
            raise FormatError(f"note must be an integer, got {fields[0]!r}", lineno) from None
        try:
            dur = float(fields[1])
        except ValueError:
            raise FormatError(f"unparsable duration {fields[1]!r}", lineno) from None
        if not (math.isfinite(dur) and dur > 0):
            raise FormatError("duration must be positive", lineno)
        try:
            events.append(NoteEvent(note, dur))
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    return ScoreSequence(tuple(events))


# ---------------------------------------------------------------------------
# octave errors


@dataclass(frozen=True)
class CorrectionSpan:
    start: float
    end: float
    octave_shift: int


@dataclass(frozen=True)
class OctavePolicy:
    """How to repair octave jumps.

    ``mode="auto"`` shifts voiced runs sitting a whole number of octaves away
    from both neighbours; ``mode="manual"`` applies ``spans`` verbatim.
    """

    mode: str = "auto"
    window_cents: float = 80.0
    min_run: int = 3
    spans: tuple = ()

    def __post_init__(self):
        if self.mode not in ("auto", "manual"):
            raise ConfigError(f"unknown octave policy {self.mode!r}")
        spans = tuple(sorted(self.spans, key=lambda s: (s.start, s.end)))
        for s in spans:
            if not s.end > s.start:
                raise ConfigError(f"correction span {s} has end <= start")
        for a, b in zip(spans, spans[1:]):
            if b.start < a.end:
                raise ConfigError(f"overlapping correction spans {a} and {b}")
        object.__setattr__(self, "spans", spans)


def parse_corrections(data):
    """Parse ``start_seconds,end_seconds,octave_shift`` rows into a manual policy."""
    spans = []
    for lineno, fields in _rows(_text(data)):
        if not spans and lineno == 1 and _is_header(fields):
            continue
        if len(fields) < 3:
            raise FormatError("expected start,end,octave_shift", lineno)
        try:
            spans.append(CorrectionSpan(float(fields[0]), float(fields[1]), int(fields[2])))
        except ValueError:
            raise FormatError("unparsable correction row", lineno) from None
    return OctavePolicy(mode="manual", spans=tuple(spans))


def _voiced_runs(cents, jump):
    """Split voiced frames into runs at unvoiced gaps and at jumps >= ``jump``."""
    idx = np.flatnonzero(~np.isnan(cents))
    if idx.size == 0:
        return []
    breaks = np.flatnonzero((np.diff(idx) > 1) | (np.abs(np.diff(cents[idx])) >= jump)) + 1
    return np.split(idx, breaks)


def correct_octave_errors(s, policy=None):
    """Return a copy of ``s`` with octave errors repaired.

    Timestamps and the voicing pattern are unchanged; only voiced F0 values
    are multiplied by powers of two, so an injected octave error followed by
    correction restores the original values exactly.
    """
    policy = OctavePolicy() if policy is None else policy
    f0 = s.f0.copy()
    if policy.mode == "manual":
        for span in policy.spans:
            sel = (s.times >= span.start) & (s.times < span.end) & s.voiced
            f0[sel] *= 2.0 ** span.octave_shift
        return s.with_f0(f0)

    cents = 1200.0 * np.log2(f0 / s.reference)
    runs = _voiced_runs(cents, 1200.0 - policy.window_cents)
    medians = [float(np.median(cents[r])) for r in runs]
    for k in range(1, len(runs) - 1):
        if runs[k].size < policy.min_run:
            continue
        shift = _octave_offset(medians[k] - medians[k - 1], policy.window_cents)
        if shift == 0 or shift != _octave_offset(medians[k] - medians[k + 1], policy.window_cents):
            continue
        f0[runs[k]] *= 2.0 ** -shift
        medians[k] -= 1200.0 * shift
    return s.with_f0(f0)


def _octave_offset(delta, window):
    for k in (1, -1, 2, -2):
        if abs(delta - 1200.0 * k) <= window:
            return k
    return 0
