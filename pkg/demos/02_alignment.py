# Aligning a pitch track with its note table, then splitting a peak that
# hides two notated pitches.

import numpy as np

from microtune import align, histogram, synthkit
from microtune.ingest import micromidi_to_name

# G2 is sung often and G2-sori (40 cents higher here) rarely, so their
# mountains merge in the piece histogram.
rng = np.random.default_rng(3)
seq = synthkit.random_sequence(rng, [110, 111, 114, 117], 1500, weights=[3, 1, 1, 1])
gt = synthkit.GroundTruth([0, 40, 200, 350], [12.3], [seq], jitter_sd=15, seed=3)
piece = synthkit.render_piece(gt, 0)
series, score = piece.series, piece.score

h, peaks = histogram.detect_peaks(series)
print("piece histogram:", [(round(p.center, 1), p.type.value) for p in peaks])

# Pin the longest-sounding note to the heaviest peak, then map every note.
anchor = align.default_anchor(score, peaks)
expected = align.score_to_cents(score, anchor)
print(f"anchor: {micromidi_to_name(anchor[0])} at {anchor[1]:.1f} cents")

# With the score known, the typology can see two notes inside one mountain.
peaks = histogram.classify_all(h, peaks, sorted(set(expected.tolist())))
print("with score:", [(round(p.center, 1), p.type.value) for p in peaks])

path = align.dtw_align(series, expected, score.durations)
events = path.frame_events()
v = series.voiced
print(f"DTW cost {path.cost:.0f}, frame agreement {np.mean(events[v] == piece.frame_event[v]):.3f}")

nhs = align.note_histograms(series, path, score)
for note in nhs:
    print(f"  {micromidi_to_name(note):9s} {int(nhs[note].total_mass):6d} frames")

refined = align.refine_peaks(peaks, nhs, anchor)
print("refined:", [(round(p.center, 1), p.flags) for p in refined])
print("truth:  ", gt.expected_centers(0))
