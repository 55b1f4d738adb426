import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SEVEN
from microtune import synthkit
from microtune.ingest import DEFAULT_FRAME_HOP, NoteEvent, ScoreSequence, correct_octave_errors, parse_f0_csv


def _single_note(frames, jitter=0.0, vibrato=(0.0, 0.0), seed=0):
    seq = ScoreSequence((NoteEvent(110, frames * DEFAULT_FRAME_HOP),))
    return synthkit.GroundTruth([0.0], [0.0], [seq], jitter_sd=jitter, vibrato=vibrato, seed=seed)


def test_noiseless_frames_exact():
    gt = synthkit.make_repertoire(2, SEVEN, seed=3, jitter_sd=0, frames_per_degree=200)
    for i in range(2):
        piece = synthkit.render_piece(gt, i)
        v = piece.series.voiced
        np.testing.assert_allclose(piece.series.cents[v], piece.target_cents[v], atol=1e-9)
        targets = set(np.round(piece.target_cents[v], 9))
        assert targets <= set(np.round(gt.expected_centers(i), 9))


def test_same_seed_bit_identical():
    a = synthkit.make_repertoire(3, SEVEN, seed=21, frames_per_degree=300)
    b = synthkit.make_repertoire(3, SEVEN, seed=21, frames_per_degree=300)
    for i in range(3):
        assert synthkit.generate_piece(a, i)[0].to_csv() == synthkit.generate_piece(b, i)[0].to_csv()
        assert a.note_sequences[i] == b.note_sequences[i]
    c = synthkit.make_repertoire(3, SEVEN, seed=22, frames_per_degree=300)
    assert synthkit.generate_piece(c, 0)[0].to_csv() != synthkit.generate_piece(a, 0)[0].to_csv()


def test_pieces_independent_of_count():
    # a piece depends only on (seed, index), not on how many pieces come after it
    gt = synthkit.make_repertoire(2, SEVEN, seed=5, frames_per_degree=100)
    alt = synthkit.GroundTruth(gt.tuning, gt.per_piece_offset[:1], gt.note_sequences[:1],
                               jitter_sd=gt.jitter_sd, seed=gt.seed)
    np.testing.assert_array_equal(synthkit.generate_piece(gt, 0)[0].f0, synthkit.generate_piece(alt, 0)[0].f0)


def test_jitter_sd_bound():
    s, _ = synthkit.generate_piece(_single_note(5000, jitter=15.0, seed=1), 0)
    assert 12 <= np.std(s.voiced_cents()) <= 18


def test_vibrato_depth():
    s, _ = synthkit.generate_piece(_single_note(2000, vibrato=(30.0, 6.0)), 0)
    c = s.voiced_cents()
    assert c.max() == pytest.approx(30.0, abs=0.5)
    assert c.min() == pytest.approx(-30.0, abs=0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_durations_match_voiced_time(seed, n_deg):
    gt = synthkit.make_repertoire(1, SEVEN[:n_deg + 1], seed=seed, frames_per_degree=60)
    s, sc = synthkit.generate_piece(gt, 0)
    assert abs(sc.total_duration - s.n_voiced * s.frame_hop) <= s.frame_hop


def test_gaps_between_notes():
    piece = synthkit.render_piece(synthkit.make_repertoire(1, SEVEN, seed=0, frames_per_degree=100), 0)
    gaps = np.count_nonzero(np.diff(np.r_[1, piece.series.voiced.astype(int)]) == -1)
    assert gaps == len(piece.score) - 1


class TestInject:
    def setup_method(self):
        self.s, _ = synthkit.generate_piece(_single_note(200, jitter=10.0), 0)

    @pytest.mark.parametrize("start, end", [(0.3, 0.3), (0.5, 0.2), (-0.1, 0.5), (0.1, 100.0)])
    def test_bad_span(self, start, end):
        with pytest.raises(ValueError):
            synthkit.inject_octave_error(self.s, start, end)

    def test_shift_and_round_trip(self):
        bad = synthkit.inject_octave_error(self.s, 0.3, 0.6)
        moved = ~np.isclose(bad.f0, self.s.f0)
        np.testing.assert_allclose(bad.cents[moved] - self.s.cents[moved], 1200.0, atol=1e-9)
        np.testing.assert_array_equal(correct_octave_errors(bad).f0, self.s.f0)

    def test_unvoiced_span_unchanged(self):
        gt = synthkit.make_repertoire(1, SEVEN, seed=2, frames_per_degree=100)
        piece = synthkit.render_piece(gt, 0)
        s = piece.series
        gap = np.flatnonzero(~s.voiced)[:3]
        out = synthkit.inject_octave_error(s, s.times[gap[0]], s.times[gap[-1]] + 1e-6)
        np.testing.assert_array_equal(out.f0, s.f0)


def test_write_corpus(tmp_path):
    gt = synthkit.make_repertoire(3, SEVEN, seed=8, frames_per_degree=100, fluid={1: (120, 180)})
    ids = synthkit.write_corpus(gt, tmp_path)
    assert ids == ["piece_000", "piece_001", "piece_002"]
    manifest = json.loads((tmp_path / "ground_truth.json").read_text())
    assert manifest["pieces"] == ids and manifest["seed"] == 8
    assert all(120 <= t[1] <= 180 for t in manifest["piece_tunings"])
    s = parse_f0_csv((tmp_path / "piece_001.f0.csv").read_bytes())
    np.testing.assert_allclose(s.f0, synthkit.generate_piece(gt, 1)[0].f0, rtol=1e-9, equal_nan=True)


def test_tuning_must_increase():
    with pytest.raises(ValueError):
        synthkit.GroundTruth([0, 200, 100], [0.0], [ScoreSequence(())])
