# Recovering one tuning from twelve pieces that are each transposed by up
# to 40 cents, with the second degree left free to wander between 120 and
# 180 cents from piece to piece.

import numpy as np

from microtune import pipeline, synthkit
from microtune.ingest import PitchSeries
from microtune.tuning import cost, optimize

scale = [0, 150, 300, 500, 700, 850, 1000]
gt = synthkit.make_repertoire(12, scale, seed=5, fluid={1: (120, 180)})
print("offsets:", np.round(gt.per_piece_offset, 1))

items = []
for i in range(gt.n_pieces):
    s, sc = synthkit.generate_piece(gt, i)
    # forget the rendering pitch; each piece is measured from its own strongest peak
    items.append((synthkit.piece_id(i), PitchSeries(s.times, s.f0, s.frame_hop), sc, None))

pieces = pipeline.analyze_many(items)
result = pipeline.tune_repertoire(pieces)

m0, opt = result.matrix, result.optimized
print(f"matrix {m0.shape}, cost {cost(m0):.1f} -> {cost(opt.matrix):.1f} "
      f"in {int(opt.trace.accepted[1:].sum())} accepted steps")
print("row shifts:", opt.shifts.astype(int))

for d in result.tuning:
    tag = "  fluid" if d.fluid else ""
    print(f"  {d.label or '?':9s} {d.mean:8.2f} +/- {d.stdev:5.2f}  n={d.support}{tag}")

# Moving every piece to its strongest peak already lines the rows up here,
# so the optimiser had nothing to gain. Knock the rows out of place and
# let it pull them back.
rng = np.random.default_rng(0)
jolt = rng.integers(-15, 16, opt.matrix.shape[0])
shaken = opt.matrix.shifted(jolt)
back = optimize(shaken)
print(f"shaken cost {cost(shaken):.1f} -> {cost(back.matrix):.1f} after {len(back.trace) - 1} steps")
print("undone:", np.all(back.shifts - back.shifts[0] == -(jolt - jolt[0])))
