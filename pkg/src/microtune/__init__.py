"""Data-driven tuning estimation for microtonal vocal repertoires."""

from .ingest import (
    NoteEvent, OctavePolicy, PitchSeries, ScoreSequence, cents_to_hz, correct_octave_errors,
    hz_to_cents, micromidi_to_name, name_to_micromidi, parse_f0_csv, parse_note_table,
)
from .histogram import HistogramConfig, Peak, PeakType, detect_peaks
from .align import dtw_align, note_histograms, refine_peaks, score_to_cents
from .tuning import PitchMatrix, assemble_matrix, cost, derive_tuning, optimize

__version__ = "0.1.0"
