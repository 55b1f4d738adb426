"""
Score alignment and per-note histograms.

The F0 curve (voiced frames only) is aligned to the score's event sequence
with DTW. Each frame then belongs to one note, which lets us build one
histogram per notated pitch and use those to untangle ambiguous peaks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .histogram import (
    HistogramConfig, InsufficientDataError, Peak, PeakRange, PeakType, build_histogram,
    find_peak_ranges, fit_accepted, fit_tilted_gaussian, interpolated_apex, smooth,
)
from .ingest import CENTS_PER_UNIT


class AlignmentUnavailable(ValueError):
    """Raised when there is no score to align against."""


def score_to_cents(score, anchor):
    """Expected cents for each event given ``anchor = (micromidi, cents)``."""
    note, cents = anchor
    return cents + (score.notes - note) * CENTS_PER_UNIT


def default_anchor(score, peaks):
    """Pin the score's longest-sounding note to the highest-mass peak."""
    return score.modal_note(), max(peaks, key=lambda p: p.mass).center


@dataclass(frozen=True)
class AlignmentPath:
    """Warping path over voiced frames x score events.

    ``pairs[k] = (row, event)`` where ``row`` indexes voiced frames only;
    ``frames[row]`` is that frame's index in the full series.
    """

    pairs: np.ndarray
    cost: float
    frames: np.ndarray
    n_frames: int
    n_events: int
    local: np.ndarray = field(repr=False, default=None)

    def row_events(self):
        """One event per voiced frame: the lowest-cost pair in that row."""
        rows, events = self.pairs[:, 0], self.pairs[:, 1]
        # sort by row, then cost, then event; the first entry per row wins
        order = np.lexsort((events, self.local, rows))
        first = np.r_[True, np.diff(rows[order]) != 0]
        out = np.full(self.frames.size, -1, dtype=int)
        out[rows[order][first]] = events[order][first]
        return out

    def frame_events(self):
        """Event index for every frame of the series.

        Unvoiced frames take the event of the nearest voiced frame (the
        earlier one on ties).
        """
        rows = self.row_events()
        pos = np.searchsorted(self.frames, np.arange(self.n_frames))
        left = np.clip(pos - 1, 0, self.frames.size - 1)
        right = np.clip(pos, 0, self.frames.size - 1)
        idx = np.arange(self.n_frames)
        use_right = np.abs(self.frames[right] - idx) < np.abs(idx - self.frames[left])
        return rows[np.where(use_right, right, left)]


def _band_limits(n, durations, half_width):
    """Per-row [lo, hi] event windows around the duration-proportional diagonal."""
    m = len(durations)
    cum = np.concatenate(([0.0], np.cumsum(durations)))
    cum /= cum[-1]
    start = np.floor(cum[:-1] * n).astype(int)
    stop = np.maximum(np.ceil(cum[1:] * n).astype(int) - 1, start)
    rows = np.arange(n)
    lo = np.searchsorted(stop + half_width, rows, side="left")
    hi = np.searchsorted(start - half_width, rows, side="right") - 1
    lo = np.clip(lo, 0, m - 1)
    hi = np.clip(hi, 0, m - 1)
    lo[0] = 0
    hi[-1] = m - 1
    hi = np.maximum(hi, lo)
    return lo, hi


def dtw_align(s, expected, durations=None, band="auto", cost_cap=600.0):
    """Align the voiced frames of ``s`` to events with expected pitch ``expected``.

    Local cost is ``min(|frame - event|, cost_cap)`` in cents; allowed steps
    are (1,0), (0,1) and (1,1). ``band`` is a Sakoe-Chiba half-width in
    frames, ``"auto"`` for ``max(0.1 * frames, 2 s worth of frames)``, or
    ``None`` for no band. The band follows the diagonal implied by
    ``durations``.
    """
    expected = np.asarray(expected, dtype=float)
    if expected.size == 0:
        raise AlignmentUnavailable("score absent")
    frames = np.flatnonzero(s.voiced)
    if frames.size == 0:
        raise ValueError("no voiced frames")
    x = s.cents[frames]
    n, m = x.size, expected.size
    durations = np.ones(m) if durations is None else np.asarray(durations, dtype=float)

    if band is None:
        lo, hi = np.zeros(n, dtype=int), np.full(n, m - 1)
    else:
        w = max(0.1 * n, 2.0 / s.frame_hop) if band == "auto" else float(band)
        lo, hi = _band_limits(n, durations, int(math.ceil(w)))

    D = np.full((n, m), np.inf)
    prev = None
    for i in range(n):
        a, b = lo[i], hi[i] + 1
        c = np.minimum(np.abs(x[i] - expected[a:b]), cost_cap)
        if prev is None:
            entry = np.full(b - a, np.inf)
            entry[0] = 0.0
        else:
            up = prev[a:b]
            diag = np.full(b - a, np.inf)
            if a > 0:
                diag[:] = prev[a - 1:b - 1]
            else:
                diag[1:] = prev[0:b - 1]
            entry = np.minimum(up, diag)
        S = np.cumsum(c)
        D[i, a:b] = S + np.minimum.accumulate(entry - (S - c))
        prev = D[i]

    if not np.isfinite(D[-1, -1]):
        raise ValueError("band too narrow for a boundary-to-boundary path")
    pairs = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        options = []
        if i > 0 and j > 0:
            options.append((D[i - 1, j - 1], i - 1, j - 1))
        if i > 0:
            options.append((D[i - 1, j], i - 1, j))
        if j > 0:
            options.append((D[i, j - 1], i, j - 1))
        _, i, j = min(options, key=lambda o: o[0])
        pairs.append((i, j))
    pairs = np.array(pairs[::-1], dtype=int)
    pairs = _resolve_repeats(pairs, expected, durations, frames)
    local = np.minimum(np.abs(x[pairs[:, 0]] - expected[pairs[:, 1]]), cost_cap)
    return AlignmentPath(pairs, float(local.sum()), frames, len(s), m, local)


def _cut_rows(rows, frames, durations):
    """Split ``rows`` into ``len(durations)`` consecutive non-empty chunks.

    Cuts prefer unvoiced gaps nearest to the duration-proportional positions.
    """
    k = len(durations)
    n = rows.size
    gaps = np.flatnonzero(np.diff(frames[rows]) > 1) + 1  # chunk starts at a gap
    targets = np.cumsum(durations)[:-1] / np.sum(durations) * n
    cuts, last = [], 0
    for q, t in enumerate(targets):
        lo, hi = last + 1, n - (k - 1 - q)  # leave room for the remaining chunks
        cand = gaps[(gaps >= lo) & (gaps <= hi)]
        if cand.size:
            cut = int(cand[np.argmin(np.abs(cand - t))])
        else:
            cut = int(min(max(round(t), lo), hi))
        cuts.append(cut)
        last = cut
    return np.split(rows, cuts)


def _resolve_repeats(pairs, expected, durations, frames):
    """Re-divide frames among consecutive events with identical expected pitch.

    Such events cost the same for every frame, so any split between them is
    optimal; use the unvoiced gaps (and durations) to choose one.
    """
    m = expected.size
    out = []
    j = 0
    while j < m:
        k = j
        while k + 1 < m and expected[k + 1] == expected[j]:
            k += 1
        block = pairs[(pairs[:, 1] >= j) & (pairs[:, 1] <= k)]
        rows = np.unique(block[:, 0])
        if k > j and rows.size >= k - j + 1:
            for e, chunk in zip(range(j, k + 1), _cut_rows(rows, frames, durations[j:k + 1])):
                out.extend((r, e) for r in chunk)
        else:
            out.extend(map(tuple, block))
        j = k + 1
    return np.array(out, dtype=int)


def path_cost(x, expected, pairs, cost_cap=600.0):
    x = np.asarray(x, float)
    expected = np.asarray(expected, float)
    return float(np.minimum(np.abs(x[pairs[:, 0]] - expected[pairs[:, 1]]), cost_cap).sum())


def to_csv(s, path, score):
    """Alignment export: ``time_seconds,frame_cents,event_index,micromidi`` per voiced frame."""
    rows = path.row_events()
    cents = s.cents
    lines = ["time_seconds,frame_cents,event_index,micromidi"]
    for r, f in enumerate(path.frames):
        e = rows[r]
        lines.append(f"{s.times[f]:.6f},{cents[f]:.6f},{e},{score.events[e].note}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# per-note histograms


@dataclass(frozen=True)
class NoteHistogramSet:
    per_note: dict

    def __len__(self):
        return len(self.per_note)

    def __getitem__(self, note):
        return self.per_note[note]

    def __contains__(self, note):
        return note in self.per_note

    def __iter__(self):
        return iter(sorted(self.per_note))

    @property
    def total_mass(self):
        return sum(h.total_mass for h in self.per_note.values())


def note_histograms(s, path, score, bin_width=1.0):
    """Histogram of the aligned frames of every notated pitch in ``score``."""
    rows = path.row_events()
    cents = s.cents[path.frames]
    notes = score.notes[rows]
    per_note = {}
    for note in np.unique(score.notes):
        sel = notes == note
        if sel.any():
            per_note[int(note)] = build_histogram(cents[sel], bin_width)
    return NoteHistogramSet(per_note)


def _mass_in_range(h, r):
    c = h.centers
    return float(h.counts[(c >= r.lo) & (c < r.hi)].sum())


def note_apex(h, r, sigma=6.0, rmse_gate=0.15):
    """Modelled apex of a per-note histogram inside ``r``.

    Uses the tilted-Gaussian center of the note's mountain when the fit is
    accepted and lands inside ``r``; otherwise the interpolated maximum.
    """
    hs = smooth(h, sigma)
    c = hs.centers
    inside = np.flatnonzero((c >= r.lo) & (c < r.hi))
    if inside.size == 0:
        return None
    k = inside[int(np.argmax(hs.counts[inside]))]
    apex = interpolated_apex(hs, k)
    for mr in find_peak_ranges(hs, 0.02, 0.25):
        if mr.lo <= c[k] < mr.hi:
            try:
                fit = fit_tilted_gaussian(hs, mr)
            except InsufficientDataError:
                break
            if fit_accepted(fit, mr, rmse_gate) and r.lo <= fit.c4 <= r.hi:
                apex = fit.c4
            break
    return float(np.clip(apex, r.lo, r.hi))


def _weighted_mean(h, r):
    c = h.centers
    sel = (c >= r.lo) & (c < r.hi)
    w = h.counts[sel]
    return float((c[sel] * w).sum() / w.sum())


def _snap(value, r, grid):
    return r.lo + round((value - r.lo) / grid) * grid


def refine_peaks(peaks, nhs, anchor, cfg=None, dominance=0.8, min_share=0.2):
    """Resolve non-type-I peaks with per-note histograms.

    Notes whose expected cents fall in a peak's range compete for the range's
    mass. One note holding ``dominance`` of it re-centres the peak (on its
    mass-weighted mean for type IV, on its apex otherwise). Two notes each
    holding ``min_share`` split the peak in two. Everything else passes
    through with a flag explaining why.
    """
    cfg = HistogramConfig() if cfg is None else cfg
    note0, cents0 = anchor
    out = []
    for p in peaks:
        if p.type is PeakType.I:
            out.append(p)
            continue
        r = p.range
        covering = [n for n in nhs if r.lo <= cents0 + (n - note0) * CENTS_PER_UNIT <= r.hi]
        masses = {n: _mass_in_range(nhs[n], r) for n in covering}
        total = sum(masses.values())
        if total <= 0:
            out.append(replace(p, flags=p.flags + ("no-note-histogram",)))
            continue
        ranked = sorted(masses, key=lambda n: (-masses[n], n))
        shares = [masses[n] / total for n in ranked]
        top = ranked[0]
        if shares[0] >= dominance:
            h = nhs[top]
            if p.type is PeakType.IV:
                center = _weighted_mean(h, r)
            else:
                center = note_apex(h, r, cfg.sigma, cfg.rmse_gate)
            out.append(replace(p, center=float(np.clip(center, r.lo, r.hi)),
                               flags=p.flags + (f"recentered:{top}",)))
        elif len(ranked) >= 2 and shares[1] >= min_share:
            pair = sorted(ranked[:2], key=lambda n: n)
            centers = [note_apex(nhs[n], r, cfg.sigma, cfg.rmse_gate) for n in pair]
            if centers[0] is None or centers[1] is None or not centers[0] < centers[1]:
                out.append(replace(p, flags=p.flags + ("unresolved",)))
                continue
            grid = cfg.bin_width
            cut = _snap(0.5 * (centers[0] + centers[1]), r, grid)
            cut = min(max(cut, r.lo + grid), r.hi - grid)
            subranges = [PeakRange(r.lo, cut), PeakRange(cut, r.hi)]
            for n, center, sub in zip(pair, centers, subranges):
                share = masses[n] / total
                out.append(replace(
                    p, center=float(np.clip(center, sub.lo, sub.hi)), range=sub,
                    mass=p.mass * share, mass_fraction=p.mass_fraction * share,
                    alternatives={}, flags=p.flags + (f"split:{n}",)))
        else:
            out.append(replace(p, flags=p.flags + ("unresolved",)))
    return sorted(out, key=lambda q: q.center)
