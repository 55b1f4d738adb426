import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microtune import synthkit
from microtune.ingest import (
    DEFAULT_FRAME_HOP, MICROMIDI_MAX, MICROMIDI_MIN, ConfigError, CorrectionSpan, FormatError,
    OctavePolicy, PitchSeries, ScoreSequence, cents_to_hz, correct_octave_errors, hz_to_cents,
    micromidi_to_name, name_to_micromidi, parse_corrections, parse_f0_csv, parse_note_table,
)


class TestCents:
    def test_identity_and_octave(self):
        assert hz_to_cents(440, 440) == 0.0
        assert hz_to_cents(440, 220) == 1200.0

    def test_hundred_cents(self):
        f = 440.0 * math.pow(2.0, 100.0 / 1200.0)  # independent construction
        assert f == pytest.approx(466.1637615, abs=1e-7)
        assert hz_to_cents(466.1637615, 440) == pytest.approx(100.0, abs=1e-6)

    @pytest.mark.parametrize("f, ref", [(0, 440), (-1, 440), (440, 0), (440, -3)])
    def test_domain_errors(self, f, ref):
        with pytest.raises(ValueError):
            hz_to_cents(f, ref)

    @given(st.floats(-4800, 4800), st.floats(20, 2000))
    def test_round_trip(self, c, ref):
        assert hz_to_cents(cents_to_hz(c, ref), ref) == pytest.approx(c, abs=1e-9)

    @given(st.floats(20, 2000), st.floats(20, 2000), st.floats(20, 2000))
    def test_telescoping(self, f, r, g):
        # cents measured upward from the second argument
        total = hz_to_cents(f, r) + hz_to_cents(r, g)
        assert total == pytest.approx(hz_to_cents(f, g), abs=1e-9)

    def test_vectorised(self):
        out = hz_to_cents(np.array([220.0, 440.0, 880.0]), 440.0)
        np.testing.assert_allclose(out, [-1200, 0, 1200])


class TestF0Csv:
    def test_two_voiced_samples(self):
        s = parse_f0_csv("0.0,220.0\n0.00580,220.0")
        assert len(s) == 2 and s.n_voiced == 2
        np.testing.assert_array_equal(s.f0, [220.0, 220.0])

    @pytest.mark.parametrize("raw", ["0", "-5", "", "nan", "NaN"])
    def test_unvoiced_markers(self, raw):
        s = parse_f0_csv(f"0.0,220\n0.1,{raw}\n0.2,230")
        assert s.times[1] == 0.1
        assert list(s.voiced) == [True, False, True]

    def test_header_crlf_bom(self):
        s = parse_f0_csv("﻿time,frequency\r\n0.0,100\r\n0.01,200\r\n".encode())
        assert len(s) == 2
        assert s.frame_hop == pytest.approx(0.01)

    def test_256_sample_hop(self):
        # 256-sample hop at 44.1 kHz
        times = np.arange(50) * 256 / 44100
        text = "\n".join(f"{t:.9f},200" for t in times)
        s = parse_f0_csv(text)
        assert s.frame_hop == pytest.approx(0.005805, abs=5e-7)
        assert DEFAULT_FRAME_HOP == 256 / 44100

    def test_non_monotone_time(self):
        with pytest.raises(FormatError, match="row 3"):
            parse_f0_csv("0.0,200\n0.1,200\n0.05,200\n")

    def test_unparsable(self):
        with pytest.raises(FormatError, match="row 2"):
            parse_f0_csv("0.0,200\n0.1,abc\n")
        with pytest.raises(FormatError):
            parse_f0_csv("0.0,200\n0.1\n")

    def test_cents_view(self):
        s = PitchSeries([0.0, 0.01], [440.0, 880.0], 0.01, ref_hz=220.0)
        np.testing.assert_allclose(s.cents, [1200.0, 2400.0])

    @settings(max_examples=50)
    @given(st.lists(st.one_of(st.just(0.0), st.floats(30, 1500)), min_size=1, max_size=40))
    def test_serialise_round_trip(self, freqs):
        times = np.arange(len(freqs)) * DEFAULT_FRAME_HOP
        s = PitchSeries(times, freqs)
        back = parse_f0_csv(s.to_csv())
        np.testing.assert_allclose(back.times, s.times, atol=1e-6)
        np.testing.assert_array_equal(back.voiced, s.voiced)
        np.testing.assert_allclose(back.f0[s.voiced], s.f0[s.voiced], atol=1e-6)


class TestNotes:
    def test_g2(self):
        sc = parse_note_table("110,0.5")
        assert sc.events[0].note == 110 and sc.events[0].duration == 0.5
        assert sc.events[0].name == "G2"

    def test_koron(self):
        sc = parse_note_table("113,0.25")
        assert sc.events[0].name == "A2-koron"
        assert sc.events[0].duration == 0.25

    def test_empty(self):
        sc = parse_note_table("")
        assert isinstance(sc, ScoreSequence) and sc.absent and len(sc) == 0

    @pytest.mark.parametrize("row", ["110.5,1", "110,0", "110,-1", "abc,1"])
    def test_bad_rows(self, row):
        with pytest.raises(FormatError):
            parse_note_table(row)

    def test_modal_note(self):
        sc = parse_note_table("110,0.5\n114,0.2\n114,0.2\n113,1.0")
        assert sc.modal_note() == 113


class TestMicroMidi:
    @pytest.mark.parametrize("m, name", [
        (110, "G2"), (111, "G2-sori"), (112, "G#2"), (113, "A2-koron"), (114, "A2"),
    ])
    def test_published_table(self, m, name):
        assert micromidi_to_name(m) == name
        assert name_to_micromidi(name) == m

    def test_full_range_round_trip(self):
        names = [micromidi_to_name(m) for m in range(MICROMIDI_MIN, MICROMIDI_MAX + 1)]
        assert len(set(names)) == len(names)
        assert [name_to_micromidi(n) for n in names] == list(range(MICROMIDI_MIN, MICROMIDI_MAX + 1))

    def test_quarter_tone_spellings(self):
        # between E and F the sori of E is canonical; F-koron is accepted as input
        e = name_to_micromidi("E2")
        assert micromidi_to_name(e + 1) == "E2-sori"
        assert name_to_micromidi("F2-koron") == e + 1

    @pytest.mark.parametrize("m", [39, 201, 110.5])
    def test_out_of_range(self, m):
        with pytest.raises(ValueError):
            micromidi_to_name(m)

    def test_cents_distance(self):
        from microtune.align import score_to_cents
        sc = parse_note_table("110,1\n117,1")
        c = score_to_cents(sc, (110, 0.0))
        assert c[1] - c[0] == (117 - 110) * 50


def _series(cents, hop=0.01, ref=220.0):
    cents = np.asarray(cents, float)
    return PitchSeries(np.arange(cents.size) * hop, ref * np.exp2(cents / 1200), hop, ref_hz=ref)


class TestOctave:
    def test_exact_octave_run(self):
        f0 = np.r_[np.full(10, 440.0), np.full(10, 880.0), np.full(10, 440.0)]
        s = PitchSeries(np.arange(30) * 0.01, f0, 0.01, ref_hz=440.0)
        out = correct_octave_errors(s)
        np.testing.assert_array_equal(out.f0, np.full(30, 440.0))

    def test_no_jumps_unchanged(self):
        rng = np.random.default_rng(0)
        s = _series(np.cumsum(rng.normal(0, 20, 200)))
        out = correct_octave_errors(s)
        np.testing.assert_array_equal(out.f0, s.f0)

    def test_injected_error_recovered_exactly(self):
        gt = synthkit.make_repertoire(1, [0, 200, 350, 500], seed=4, jitter_sd=10, frames_per_degree=400)
        s, _ = synthkit.generate_piece(gt, 0)
        # 50 frames inside the first note
        first_len = int(np.argmax(~s.voiced))
        assert first_len > 60
        start = s.times[5]
        end = s.times[55]
        bad = synthkit.inject_octave_error(s, start, end)
        assert (~np.isclose(bad.f0, s.f0, equal_nan=True)).sum() == 50
        fixed = correct_octave_errors(bad)
        np.testing.assert_array_equal(fixed.f0, s.f0)
        np.testing.assert_array_equal(fixed.times, s.times)

    def test_keeps_timestamps_and_voicing(self):
        cents = np.r_[np.zeros(5), [np.nan] * 3, np.full(5, 1200.0), [np.nan] * 2, np.zeros(5)]
        s = _series(cents)
        out = correct_octave_errors(s)
        np.testing.assert_array_equal(out.voiced, s.voiced)
        np.testing.assert_allclose(out.cents[out.voiced], 0.0, atol=1e-9)

    def test_short_run_left_alone(self):
        cents = np.r_[np.zeros(10), np.full(2, 1200.0), np.zeros(10)]
        out = correct_octave_errors(_series(cents))
        assert np.nanmax(out.cents) == pytest.approx(1200.0)

    def test_manual_spans(self):
        s = _series(np.zeros(20))
        policy = OctavePolicy("manual", spans=(CorrectionSpan(0.05, 0.1, -1),))
        out = correct_octave_errors(s, policy)
        np.testing.assert_allclose(out.cents[5:10], -1200.0)
        np.testing.assert_allclose(out.cents[:5], 0.0)
        np.testing.assert_allclose(out.cents[10:], 0.0)

    def test_overlapping_spans(self):
        with pytest.raises(ConfigError):
            OctavePolicy("manual", spans=(CorrectionSpan(0, 1, 1), CorrectionSpan(0.5, 2, -1)))
        with pytest.raises(ConfigError):
            parse_corrections("0,1,1\n0.5,2,-1\n")

    def test_parse_corrections(self):
        pol = parse_corrections("start,end,shift\n0.0,1.5,-1\n2,3,1\n")
        assert pol.mode == "manual" and len(pol.spans) == 2
        assert pol.spans[0] == CorrectionSpan(0.0, 1.5, -1)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.sampled_from([0.0, 200.0, 1200.0, -1200.0, 2400.0, np.nan]), min_size=3, max_size=12),
           st.integers(3, 8))
    def test_idempotent(self, levels, run):
        cents = np.repeat(levels, run)
        s = _series(cents)
        once = correct_octave_errors(s)
        twice = correct_octave_errors(once)
        np.testing.assert_array_equal(once.f0, twice.f0)
