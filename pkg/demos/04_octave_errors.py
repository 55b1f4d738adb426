# Pitch trackers sometimes jump an octave for a stretch of frames. A run
# that sits 1200 cents away from both of its neighbours is folded back.

import numpy as np

from microtune import synthkit
from microtune.histogram import detect_peaks
from microtune.ingest import CorrectionSpan, OctavePolicy, correct_octave_errors

gt = synthkit.make_repertoire(1, [0, 200, 350, 500], seed=4, jitter_sd=10, frames_per_degree=400)
clean, _ = synthkit.generate_piece(gt, 0)
bad = synthkit.inject_octave_error(clean, clean.times[5], clean.times[55])
print("frames moved:", int(np.sum(~np.isclose(bad.f0, clean.f0, equal_nan=True))))

_, peaks = detect_peaks(bad)
print("peaks before:", [round(p.center) for p in peaks])

fixed = correct_octave_errors(bad)
print("recovered exactly:", np.array_equal(fixed.f0, clean.f0, equal_nan=True))

# Known spans can also be given by hand, e.g. from a corrections file.
manual = OctavePolicy("manual", spans=(CorrectionSpan(clean.times[5], clean.times[55], -1),))
print("manual fix matches:", np.allclose(correct_octave_errors(bad, manual).f0, clean.f0, equal_nan=True))
