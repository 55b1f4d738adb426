"""
Pitch histograms and their peaks.

The pipeline is build -> smooth -> bound each mountain at derivative sign
changes -> fit a Gaussian on a sloped baseline -> drop peaks with too little
support -> label the peak shape (types I-IV).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ingest import PitchSeries, cents_to_hz


class EmptyInputError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class PeakType(str, enum.Enum):
    I = "I"  # well-defined Gaussian
    II = "II"  # hidden secondary note within 50 cents
    III = "III"  # double-peaked mountain
    IV = "IV"  # flat or curved top spanning >= 30 cents
    COMPOSITE = "COMPOSITE"


@dataclass(frozen=True)
class HistogramConfig:
    bin_width: float = 1.0
    sigma: float = 6.0
    min_prominence_fraction: float = 0.02
    valley_split: float = 0.25
    min_mass_fraction: float = 0.01
    valley_ratio: float = 0.85
    plateau_level: float = 0.95
    plateau_width: float = 30.0
    secondary_window: float = 50.0
    rmse_gate: float = 0.15

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        for name in ("min_prominence_fraction", "min_mass_fraction", "valley_split"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        for name in ("valley_ratio", "plateau_level"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")


@dataclass(frozen=True)
class Histogram:
    """Counts over a cents axis; bin ``i`` covers ``[origin + i*w, origin + (i+1)*w)``."""

    bin_width: float
    origin: float
    counts: np.ndarray
    total_mass: float = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError("counts must be a 1-D non-negative array")
        object.__setattr__(self, "counts", counts)
        if self.total_mass is None:
            object.__setattr__(self, "total_mass", float(counts.sum()))

    def __len__(self):
        return self.counts.size

    @property
    def edges(self):
        return self.origin + self.bin_width * np.arange(self.counts.size + 1)

    @property
    def centers(self):
        return self.origin + self.bin_width * (np.arange(self.counts.size) + 0.5)

    def bin_of(self, cents):
        return int(math.floor((cents - self.origin) / self.bin_width))

    def slice_for(self, r):
        """Bin index slice covered by a :class:`PeakRange`."""
        lo = int(round((r.lo - self.origin) / self.bin_width))
        hi = int(round((r.hi - self.origin) / self.bin_width))
        return slice(max(lo, 0), min(hi, self.counts.size))

    def mass_in(self, r):
        return float(self.counts[self.slice_for(r)].sum())

    def to_csv(self):
        lines = ["bin_center_cents,count"]
        lines += [f"{c:.6f},{n:.9g}" for c, n in zip(self.centers, self.counts)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PeakRange:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("PeakRange needs lo < hi")

    def __contains__(self, cents):
        return self.lo <= cents <= self.hi

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class GaussianFit:
    """Parameters of ``c1 + c2*x + c3*exp(-(x - c4)**2 / c5)`` with x in cents."""

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    rmse: float
    converged: bool
    iterations: int = 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.c1 + self.c2 * x + self.c3 * np.exp(-((x - self.c4) ** 2) / self.c5)

    @property
    def sigma(self):
        return math.sqrt(self.c5 / 2.0) if self.c5 > 0 else math.nan

    def as_dict(self):
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "c4": self.c4, "c5": self.c5,
                "rmse": self.rmse, "converged": self.converged}


@dataclass(frozen=True)
class Peak:
    center: float
    range: PeakRange
    mass: float
    mass_fraction: float
    type: PeakType = PeakType.I
    fit: GaussianFit | None = None
    # Type III keeps both readings: the higher apex and the midway fit.
    alternatives: dict = field(default_factory=dict)
    flags: tuple = ()

    def as_dict(self):
        d = {
            "center_cents": self.center,
            "lo": self.range.lo,
            "hi": self.range.hi,
            "mass_fraction": self.mass_fraction,
            "type": self.type.value,
            "fit": None if self.fit is None else self.fit.as_dict(),
        }
        if self.alternatives:
            d["alternatives"] = dict(self.alternatives)
        if self.flags:
            d["flags"] = list(self.flags)
        return d


# ---------------------------------------------------------------------------
# building and smoothing


def build_histogram(s, bin_width=1.0, origin=None):
    """Count voiced cents values of ``s`` (a PitchSeries or array of cents).

    By default bins are centred on multiples of ``bin_width``.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    cents = s.voiced_cents() if isinstance(s, PitchSeries) else np.asarray(s, dtype=float)
    cents = cents[np.isfinite(cents)]
    if cents.size == 0:
        raise EmptyInputError("no voiced samples")
    if origin is None:
        origin = (math.floor(cents.min() / bin_width + 0.5) - 0.5) * bin_width
    idx = np.floor((cents - origin) / bin_width).astype(np.int64)
    if idx.min() < 0:
        raise ValueError("origin lies above the lowest sample")
    counts = np.bincount(idx).astype(float)
    return Histogram(bin_width, float(origin), counts, float(cents.size))


def gaussian_kernel(sigma_bins):
    half = int(math.ceil(4.0 * sigma_bins))
    j = np.arange(-half, half + 1, dtype=float)
    with np.errstate(over="ignore"):  # vanishing sigma underflows to a delta
        k = np.exp(-0.5 * (j / sigma_bins) ** 2)
    return k / k.sum()


def smooth(h, sigma):
    """Gaussian smoothing with standard deviation ``sigma`` cents.

    The kernel is truncated at 4 sigma and normalised; the histogram is
    widened by the kernel half-width on both sides so no mass is lost.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return Histogram(h.bin_width, h.origin, h.counts.copy(), h.total_mass)
    kernel = gaussian_kernel(sigma / h.bin_width)
    half = kernel.size // 2
    counts = np.convolve(h.counts, kernel, mode="full")
    return Histogram(h.bin_width, h.origin - half * h.bin_width, counts, float(counts.sum()))


# ---------------------------------------------------------------------------
# apexes, valleys, ranges


def _plateaus(c):
    """Run-length encode ``c`` into (start, stop, value) runs of equal values."""
    change = np.flatnonzero(np.diff(c) != 0) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [c.size]))
    return starts, stops, c[starts]


def apex_indices(c):
    """Indices where the first difference changes sign from + to -.

    A flat top counts once, at its middle. Values outside the array are
    treated as zero.
    """
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        return np.array([], dtype=int)
    starts, stops, vals = _plateaus(c)
    left = np.concatenate(([0.0], vals[:-1]))
    right = np.concatenate((vals[1:], [0.0]))
    is_apex = (vals > left) & (vals > right) & (vals > 0)
    return ((starts[is_apex] + stops[is_apex] - 1) // 2).astype(int)


def prominence(c, i):
    """Height of ``c[i]`` above the higher of its two bounding saddles."""
    h = c[i]
    higher_left = np.flatnonzero(c[:i] > h)
    lo = higher_left[-1] if higher_left.size else 0
    higher_right = np.flatnonzero(c[i + 1:] > h)
    hi = i + 1 + higher_right[0] if higher_right.size else c.size - 1
    left_min = c[lo:i + 1].min() if higher_left.size else 0.0
    right_min = c[i:hi + 1].min() if higher_right.size else 0.0
    return h - max(left_min, right_min)


def significant_apexes(c, min_prominence_fraction):
    c = np.asarray(c, dtype=float)
    apexes = apex_indices(c)
    if apexes.size == 0:
        return apexes
    floor = min_prominence_fraction * c.max()
    prom = np.array([prominence(c, i) for i in apexes])
    return apexes[(prom >= floor) & (prom > 0)]


def _mountains(c, min_prominence_fraction, valley_split):
    """Bin spans [start, stop) of each mountain together with its apexes."""
    if c.size == 0 or c.max() <= 0:
        return []
    empty = c <= 1e-12 * c.max()
    apexes = significant_apexes(c, min_prominence_fraction)
    out = []
    # contiguous non-empty segments
    nonempty = np.flatnonzero(~empty)
    seg_breaks = np.flatnonzero(np.diff(nonempty) > 1) + 1
    for seg in np.split(nonempty, seg_breaks):
        a, b = seg[0], seg[-1] + 1
        inside = apexes[(apexes >= a) & (apexes < b)]
        if inside.size == 0:
            continue
        start = a
        group = [inside[0]]
        for p, q in zip(inside[:-1], inside[1:]):
            v = p + int(np.argmin(c[p:q + 1]))
            if c[v] <= valley_split * min(c[p], c[q]):
                out.append((start, v + 1, group))
                start, group = v + 1, []
            group.append(q)
        out.append((start, b, group))
    return out


def find_peak_ranges(h, min_prominence_fraction=0.02, valley_split=0.25):
    """Bound each mountain of a smoothed histogram.

    Apexes (+ to - sign changes of the first difference) whose prominence is
    below ``min_prominence_fraction * max`` are ignored. Each remaining apex
    owns the bins out to the nearest empty bin; neighbouring apexes are
    separated at the minimum between them when that valley falls to
    ``valley_split`` of the lower apex or less, and otherwise share one
    mountain (a double-peaked shape).
    """
    if not 0 <= min_prominence_fraction < 1:
        raise ValueError("min_prominence_fraction must lie in [0, 1)")
    c = h.counts
    ranges = []
    for start, stop, _ in _mountains(c, min_prominence_fraction, valley_split):
        ranges.append(PeakRange(h.origin + start * h.bin_width, h.origin + stop * h.bin_width))
    return ranges


# ---------------------------------------------------------------------------
# tilted Gaussian fit


def _tilted_model(p, u):
    c1, c2, c3, c4, c5 = p
    g = np.exp(-((u - c4) ** 2) / c5)
    return c1 + c2 * u + c3 * g, g


def _tilted_jacobian(p, u, g):
    _, _, c3, c4, c5 = p
    du = u - c4
    return np.column_stack([
        np.ones_like(u),
        u,
        g,
        c3 * g * 2.0 * du / c5,
        c3 * g * du ** 2 / c5 ** 2,
    ])


def levenberg_marquardt(x, y, p0, max_iter=200, rtol=1e-8, history=None):
    """Damped Gauss-Newton fit of the tilted Gaussian to (x, y).

    Steps are only accepted when they lower the squared residual, so the
    residual is monotone non-increasing. Returns (params, sse, converged, iters).
    If ``history`` is a list, the residual after each accepted step is appended.
    """
    p = np.asarray(p0, dtype=float)
    yhat, g = _tilted_model(p, x)
    r = y - yhat
    sse = float(r @ r)
    if history is not None:
        history.append(sse)
    scale = max(float(np.abs(y).max()), 1e-300) ** 2 * y.size
    lam = 1e-3
    for it in range(1, max_iter + 1):
        if sse <= 1e-28 * scale:
            return p, sse, True, it
        J = _tilted_jacobian(p, x, g)
        A = J.T @ J
        b = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1e-12
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), b)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = p + step
                if trial[4] > 0 and np.all(np.isfinite(trial)):
                    yt, gt = _tilted_model(trial, x)
                    rt = y - yt
                    sse_t = float(rt @ rt)
                    if sse_t < sse:
                        break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left: stationary point
                return p, sse, True, it
        rel = (sse - sse_t) / sse if sse > 0 else 0.0
        p, g, r, sse = trial, gt, rt, sse_t
        if history is not None:
            history.append(sse)
        lam = max(lam / 10.0, 1e-12)
        if rel < rtol:
            return p, sse, True, it
    return p, sse, False, max_iter


def fit_tilted_gaussian(h, r, history=None):
    """Fit ``c1 + c2*x + c3*exp(-(x-c4)**2/c5)`` to the bins of ``h`` inside ``r``."""
    sl = h.slice_for(r)
    x = h.centers[sl]
    y = h.counts[sl]
    if x.size < 6:
        raise InsufficientDataError(f"peak range has {x.size} bins, need at least 6")
    x0 = 0.5 * (x[0] + x[-1])
    u = x - x0
    slope = (y[-1] - y[0]) / (u[-1] - u[0])
    intercept = y[0] - slope * u[0]
    k = int(np.argmax(y))
    c4 = u[k]
    c3 = y[k] - (intercept + slope * c4)
    if c3 <= 0:
        c3 = max(y[k], 1e-12)
    c5 = (0.5 * (x[-1] - x[0] + h.bin_width)) ** 2
    p, sse, converged, iters = levenberg_marquardt(u, y, [intercept, slope, c3, c4, c5], history=history)
    c1, c2, c3, c4, c5 = p
    return GaussianFit(
        c1=float(c1 - c2 * x0), c2=float(c2), c3=float(c3), c4=float(c4 + x0), c5=float(c5),
        rmse=math.sqrt(sse / x.size), converged=bool(converged), iterations=iters,
    )


def fit_accepted(fit, r, rmse_gate=0.15):
    return (fit is not None and fit.converged and fit.c3 > 0 and fit.c5 > 0
            and r.lo <= fit.c4 <= r.hi and fit.rmse <= rmse_gate * fit.c3)


def interpolated_apex(h, i):
    """Parabolic interpolation of the maximum around bin ``i``."""
    c = h.counts
    x = h.centers[i]
    if 0 < i < c.size - 1:
        den = c[i - 1] - 2 * c[i] + c[i + 1]
        if den < 0:
            x += 0.5 * (c[i - 1] - c[i + 1]) / den * h.bin_width
    return float(x)


# ---------------------------------------------------------------------------
# filtering and typology


def filter_peaks(peaks, min_mass_fraction):
    if not 0 <= min_mass_fraction < 1:
        raise ValueError("min_mass_fraction must lie in [0, 1)")
    kept = [p for p in peaks if p.mass_fraction >= min_mass_fraction]
    return sorted(kept, key=lambda p: p.center)


def _range_apexes(h, r, cfg):
    sl = h.slice_for(r)
    c = h.counts[sl]
    idx = significant_apexes(c, cfg.min_prominence_fraction)
    return c, idx, sl.start


def plateau_width(h, r, level=0.95):
    """Width in cents of the contiguous region around the top at >= level * max."""
    sl = h.slice_for(r)
    c = h.counts[sl]
    k = int(np.argmax(c))
    thresh = level * c[k]
    lo = k
    while lo > 0 and c[lo - 1] >= thresh:
        lo -= 1
    hi = k
    while hi < c.size - 1 and c[hi + 1] >= thresh:
        hi += 1
    return (hi - lo + 1) * h.bin_width


def classify_peak(h, p, score_notes=None, cfg=None):
    """Label a peak's shape; the first matching rule wins (III, IV, II, I)."""
    cfg = HistogramConfig() if cfg is None else cfg
    c, apexes, _ = _range_apexes(h, p.range, cfg)
    if apexes.size >= 2:
        top2 = np.sort(apexes[np.argsort(c[apexes])[-2:]])
        valley = c[top2[0]:top2[1] + 1].min()
        if valley < cfg.valley_ratio * min(c[top2[0]], c[top2[1]]):
            return PeakType.III
    if plateau_width(h, p.range, cfg.plateau_level) >= cfg.plateau_width:
        return PeakType.IV
    if score_notes is not None:
        inside = sorted(n for n in score_notes if n in p.range)
        if len(inside) >= 2:
            apex = h.centers[h.slice_for(p.range)][int(np.argmax(c))]
            main = min(inside, key=lambda n: abs(n - apex))
            # expected notes sit on a 50-cent grid, so also measure from the main note
            near = [n for n in inside if n != main
                    and min(abs(n - apex), abs(n - main)) <= cfg.secondary_window]
            if near:
                return PeakType.II
    if fit_accepted(p.fit, p.range, cfg.rmse_gate):
        return PeakType.I
    return PeakType.COMPOSITE


def make_peak(h, r, cfg):
    sl = h.slice_for(r)
    c = h.counts[sl]
    mass = float(c.sum())
    try:
        fit = fit_tilted_gaussian(h, r)
    except InsufficientDataError:
        fit = None
    apex = interpolated_apex(h, sl.start + int(np.argmax(c)))
    center = fit.c4 if fit_accepted(fit, r, cfg.rmse_gate) else apex
    return Peak(center=float(np.clip(center, r.lo, r.hi)), range=r, mass=mass,
                mass_fraction=mass / h.total_mass, fit=fit)


def _finish_peak(h, p, score_notes, cfg):
    kind = classify_peak(h, p, score_notes, cfg)
    p = replace(p, type=kind)
    if kind is PeakType.III:
        c, apexes, offset = _range_apexes(h, p.range, cfg)
        top2 = np.sort(apexes[np.argsort(c[apexes])[-2:]])
        xs = [interpolated_apex(h, offset + i) for i in top2]
        higher = xs[int(np.argmax(c[top2]))]
        midway = p.fit.c4 if fit_accepted(p.fit, p.range, cfg.rmse_gate) else 0.5 * (xs[0] + xs[1])
        p = replace(p, center=higher, alternatives={
            "higher_apex": higher, "midway": float(midway), "apexes": [float(x) for x in xs]})
    return p


def detect_peaks(s, cfg=None, score_notes=None):
    """Full peak pipeline on a pitch series.

    Returns the smoothed histogram and its peaks sorted by center.
    """
    cfg = HistogramConfig() if cfg is None else cfg
    h = smooth(build_histogram(s, cfg.bin_width), cfg.sigma)
    ranges = find_peak_ranges(h, cfg.min_prominence_fraction, cfg.valley_split)
    peaks = filter_peaks([make_peak(h, r, cfg) for r in ranges], cfg.min_mass_fraction)
    return h, [_finish_peak(h, p, score_notes, cfg) for p in peaks]


def classify_all(h, peaks, score_notes=None, cfg=None):
    """Re-run the typology on already detected peaks, e.g. once a score is known."""
    cfg = HistogramConfig() if cfg is None else cfg
    return [_finish_peak(h, p, score_notes, cfg) for p in peaks]


def modal_peak(peaks):
    if not peaks:
        raise EmptyInputError("no peaks")
    return max(peaks, key=lambda p: p.mass)


def anchor_reference(s, cfg=None):
    """Set ``s.ref_hz`` to the frequency of its highest-mass histogram peak."""
    _, peaks = detect_peaks(s, cfg)
    return s.with_reference(cents_to_hz(modal_peak(peaks).center, s.reference))
