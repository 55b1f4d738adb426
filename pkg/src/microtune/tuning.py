"""
Cross-repertoire tuning.

Peaks from every piece go into a pieces x degrees matrix. Rows are then
shifted rigidly, one cent at a time, to minimise the sum of per-column
standard deviations, and the per-column means give the derived tuning.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# Matrix entries live on a dyadic grid so that integer shifts are exact.
_GRID = 2.0 ** 20


def _quantize(values):
    return np.round(np.asarray(values, dtype=float) * _GRID) / _GRID


class EmptyTuningError(ValueError):
    pass


@dataclass(frozen=True)
class PitchMatrix:
    """Pieces x scale-degree peak positions in cents; NaN marks an absent degree.

    :meth:`rows` gives the zero-filled view used for export.
    """

    values: np.ndarray
    piece_ids: tuple = ()

    def __post_init__(self):
        v = _quantize(np.atleast_2d(np.asarray(self.values, dtype=float)))
        if v.ndim != 2:
            raise ValueError("matrix must be 2-D")
        object.__setattr__(self, "values", v)
        ids = tuple(self.piece_ids) or tuple(f"row{i}" for i in range(v.shape[0]))
        if len(ids) != v.shape[0]:
            raise ValueError("one piece id per row")
        object.__setattr__(self, "piece_ids", ids)

    @classmethod
    def from_rows(cls, rows, piece_ids=()):
        """Build from zero-filled rows (0 means absent)."""
        v = np.asarray(rows, dtype=float)
        return cls(np.where(v == 0, np.nan, v), piece_ids)

    @property
    def shape(self):
        return self.values.shape

    @property
    def column_count(self):
        return self.values.shape[1]

    @property
    def mask(self):
        return ~np.isnan(self.values)

    def rows(self):
        return np.nan_to_num(self.values, nan=0.0)

    def support(self):
        return self.mask.sum(axis=0)

    def shifted(self, shifts):
        """Add ``shifts[i]`` to every present entry of row ``i``."""
        return PitchMatrix(self.values + np.asarray(shifts, dtype=float)[:, None], self.piece_ids)

    def to_csv(self):
        lines = ["piece_id," + ",".join(f"c{j}" for j in range(self.column_count))]
        for pid, row in zip(self.piece_ids, self.rows()):
            lines.append(pid + "," + ",".join(f"{x:.6f}" for x in row))
        return "\n".join(lines) + "\n"


def column_stats(values):
    """Per-column (mean, population sd, support) ignoring NaN."""
    mask = ~np.isnan(values)
    n = mask.sum(axis=0)
    filled = np.where(mask, values, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = filled.sum(axis=0) / n
        dev = np.where(mask, values - mean, 0.0)
        sd = np.sqrt((dev ** 2).sum(axis=0) / n)
    return mean, np.where(n >= 2, sd, 0.0), n


def cost(m):
    """Sum over columns of the population sd of present entries.

    Columns with fewer than two entries contribute nothing.
    """
    values = m.values if isinstance(m, PitchMatrix) else np.asarray(m, dtype=float)
    return float(column_stats(values)[1].sum())


# ---------------------------------------------------------------------------
# assembly


def _single_linkage(x, threshold):
    """Cluster labels for sorted 1-D points: split wherever the gap exceeds threshold."""
    order = np.argsort(x, kind="stable")
    labels = np.empty(x.size, dtype=int)
    labels[order] = np.concatenate(([0], np.cumsum(np.diff(x[order]) > threshold)))
    return labels


def assemble_matrix(peak_sets, link_threshold=50.0, piece_ids=None):
    """Arrange per-piece peaks into a :class:`PitchMatrix`.

    ``peak_sets`` holds one list per piece of Peak objects (or of
    ``(center, mass)`` pairs). Each piece is first translated so its heaviest
    peak is at 0; translated centers are then clustered by single linkage.
    A piece keeps at most one peak per cluster, the one nearest the cluster
    mean; any other opens its own column.
    """
    piece_ids = list(piece_ids) if piece_ids is not None else [f"piece{i}" for i in range(len(peak_sets))]
    if len(piece_ids) != len(peak_sets):
        raise ValueError("one id per peak set")
    pieces = []
    for pid, peaks in zip(piece_ids, peak_sets):
        pts = [(p.center, p.mass) if hasattr(p, "center") else tuple(p) for p in peaks]
        if not pts:
            log.warning("piece %s has no peaks; excluded", pid)
            continue
        centers = np.array([c for c, _ in pts], dtype=float)
        masses = np.array([w for _, w in pts], dtype=float)
        pieces.append((pid, np.sort(centers - centers[int(np.argmax(masses))])))
    if not pieces:
        raise ValueError("no piece has any peaks")

    owner = np.concatenate([np.full(c.size, k) for k, (_, c) in enumerate(pieces)])
    x = np.concatenate([c for _, c in pieces])
    labels = _single_linkage(x, link_threshold)

    columns = []  # list of dict piece -> value
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        mean = x[members].mean()
        main, extra = {}, []
        for k in sorted(set(owner[members])):
            own = members[owner[members] == k]
            own = own[np.argsort(np.abs(x[own] - mean), kind="stable")]
            main[k] = x[own[0]]
            extra.extend((k, x[i]) for i in own[1:])
        columns.append(main)
        # losers each open a fresh column
        for k, v in extra:
            columns.append({k: v})
    columns.sort(key=lambda col: float(np.mean(list(col.values()))))

    values = np.full((len(pieces), len(columns)), np.nan)
    for j, col in enumerate(columns):
        for k, v in col.items():
            values[k, j] = v
    return PitchMatrix(values, tuple(pid for pid, _ in pieces))


# ---------------------------------------------------------------------------
# optimisation


@dataclass(frozen=True)
class CostTrace:
    """Cost after every step; step 0 is the starting cost."""

    steps: np.ndarray
    costs: np.ndarray
    accepted: np.ndarray

    def __len__(self):
        return self.steps.size

    @property
    def accepted_costs(self):
        return self.costs[self.accepted]

    def to_csv(self):
        lines = ["step,cost"] + [f"{s},{c:.9f}" for s, c in zip(self.steps, self.costs)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class OptimizeResult:
    matrix: PitchMatrix
    trace: CostTrace
    shifts: np.ndarray  # integer cents added to each row


def _improves(new, old):
    return new < old - 1e-12 * max(1.0, abs(old))


def optimize(m, n=1000, l=None, quantum=1.0):
    """Greedy row shifting.

    Each sweep tries ``+quantum`` on every row in order (forward pass) and
    then ``-quantum`` (backward pass). A trial is kept only if the cost drops
    strictly. Stops after ``n`` sweeps or ``l`` consecutive failed trials
    (default ``2 * rows``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = m.shape[0]
    l = 2 * rows if l is None else l
    if l < 1:
        raise ValueError("l must be >= 1")
    values = m.values.copy()
    shifts = np.zeros(rows)
    current = cost(values)
    steps, costs, accepted = [0], [current], [True]
    stale = 0
    step = 0
    for _ in range(n):
        for delta in (quantum, -quantum):
            for i in range(rows):
                step += 1
                values[i] += delta
                trial = cost(values)
                if _improves(trial, current):
                    current = trial
                    shifts[i] += delta
                    stale = 0
                    ok = True
                else:
                    values[i] -= delta
                    stale += 1
                    ok = False
                steps.append(step)
                costs.append(current)
                accepted.append(ok)
                if stale >= l:
                    break
            if stale >= l:
                break
        if stale >= l:
            break
    trace = CostTrace(np.array(steps), np.array(costs), np.array(accepted))
    # rebuild from the original plus integer shifts so entries stay on the grid exactly
    return OptimizeResult(m.shifted(shifts), trace, shifts)


def brute_force_optimize(m, bound=30, chunk=200_000):
    """Exhaustive search over integer row shifts in ``[-bound, bound]``.

    Row 0 stays fixed. Returns ``(shifts, cost)``.
    """
    rows = m.shape[0]
    if rows > 4 or bound > 40:
        raise ValueError("brute force limited to 4 rows and bound 40")
    if rows == 1:
        return np.zeros(1), cost(m)
    span = np.arange(-bound, bound + 1, dtype=float)
    combos = np.array(list(itertools.product(span, repeat=rows - 1)))
    values = m.values
    mask = ~np.isnan(values)
    best_cost, best = math.inf, None
    for start in range(0, combos.shape[0], chunk):
        sh = np.concatenate([np.zeros((min(chunk, combos.shape[0] - start), 1)),
                             combos[start:start + chunk]], axis=1)
        v = values[None, :, :] + sh[:, :, None]  # (combos, rows, cols)
        n = mask.sum(axis=0)
        filled = np.where(mask[None], v, 0.0)
        mean = filled.sum(axis=1) / np.maximum(n, 1)
        dev = np.where(mask[None], v - mean[:, None, :], 0.0)
        sd = np.sqrt((dev ** 2).sum(axis=1) / np.maximum(n, 1))
        total = np.where(n >= 2, sd, 0.0).sum(axis=1)
        k = int(np.argmin(total))
        if total[k] < best_cost:
            best_cost, best = float(total[k]), sh[k]
    return best, best_cost


# ---------------------------------------------------------------------------
# derived tuning


@dataclass(frozen=True)
class Degree:
    mean: float
    stdev: float
    support: int
    label: str | None = None
    fluid: bool = False


@dataclass(frozen=True)
class Tuning:
    degrees: tuple

    def __len__(self):
        return len(self.degrees)

    def __iter__(self):
        return iter(self.degrees)

    @property
    def means(self):
        return np.array([d.mean for d in self.degrees])

    def as_records(self):
        return [
            {"degree_index": k, "mean_cents": round(d.mean, 6), "stdev_cents": round(d.stdev, 6),
             "support": int(d.support), "label": d.label, "fluid": bool(d.fluid)}
            for k, d in enumerate(self.degrees)
        ]


def reference_column(m):
    """Highest-support column; ties go to the column whose mean is nearest 0."""
    mean, _, support = column_stats(m.values)
    best = support.max()
    cand = np.flatnonzero(support == best)
    return int(cand[np.argmin(np.abs(mean[cand]))])


def gauge_fix(m):
    """Translate the whole matrix so the reference column has mean 0."""
    mean, _, _ = column_stats(m.values)
    offset = float(_quantize(mean[reference_column(m)]))
    return PitchMatrix(m.values - offset, m.piece_ids)


def derive_tuning(m, min_support=1, labels=None, fluid_stdev=12.0):
    """Per-column mean, population sd and support, relative to the reference column.

    ``labels`` optionally maps column index to a note name. Columns whose sd
    reaches ``fluid_stdev`` cents are flagged fluid.
    """
    mean, sd, support = column_stats(m.values)
    ref = reference_column(m)
    keep = np.flatnonzero(support >= min_support)
    if keep.size == 0:
        raise EmptyTuningError(f"no column has support >= {min_support}")
    labels = labels or {}
    degrees = [
        Degree(float(mean[j] - mean[ref]), float(sd[j]), int(support[j]), labels.get(int(j)),
               bool(sd[j] >= fluid_stdev))
        for j in keep
    ]
    degrees.sort(key=lambda d: d.mean)
    return Tuning(tuple(degrees))
