"""
Pitch histograms, score alignment and tuning estimation for F0 tracks.

    microtune histogram F0.csv ...      histogram CSV, peaks JSON, SVG per piece
    microtune align F0.csv ...          alignment CSV, per-note histogram CSVs, SVGs
    microtune tune DIR|F0.csv ...       matrix CSV, cost trace CSV, tuning JSON, SVGs
    microtune synth                     synthetic corpus with ground_truth.json

Exit status: 0 success, 1 unexpected failure, 2 usage/config/input error.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys

from . import align, pipeline, svgplot, synthkit
from .ingest import ConfigError, FormatError, micromidi_to_name, parse_corrections, parse_f0_csv, parse_note_table
from .config import RunConfig
from .histogram import EmptyInputError

log = logging.getLogger("microtune")


class InputError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage, self.exc = stage, exc
        super().__init__(f"[{stage}] {exc}")


def _piece_id(path):
    name = os.path.basename(path)
    for suffix in (".f0.csv", ".csv"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def _sibling(path, kind):
    base = os.path.join(os.path.dirname(path), _piece_id(path))
    cand = f"{base}.{kind}.csv"
    return cand if os.path.exists(cand) else None


def _read(path):
    if not os.path.exists(path):
        raise InputError(f"input file not found: {path}")
    with open(path, "rb") as fh:
        return fh.read()


def _load_piece(path, cfg, score_path=None, corrections_path=None, want_score=False):
    pid = _piece_id(path)
    try:
        series = parse_f0_csv(_read(path), ref_hz=cfg["ingest.ref_hz"])
    except FormatError as exc:
        raise InputError(f"{path}: {exc}") from None
    score = None
    score_path = score_path or (_sibling(path, "notes") if want_score else None)
    if score_path is not None:
        try:
            score = parse_note_table(_read(score_path))
        except FormatError as exc:
            raise InputError(f"{score_path}: {exc}") from None
    octave = cfg.octave()
    corrections_path = corrections_path or _sibling(path, "corrections")
    if corrections_path is not None:
        try:
            octave = parse_corrections(_read(corrections_path))
        except FormatError as exc:
            raise InputError(f"{corrections_path}: {exc}") from None
    return pid, series, score, octave


def _expand(paths):
    out = []
    for p in paths:
        if os.path.isdir(p):
            found = sorted(glob.glob(os.path.join(p, "*.f0.csv")))
            if not found:
                raise InputError(f"no *.f0.csv files in {p}")
            out.extend(found)
        else:
            out.append(p)
    return out


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _dump_json(path, obj):
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _round(obj, nd=6):
    if isinstance(obj, float):
        return round(obj, nd)
    if isinstance(obj, dict):
        return {k: _round(v, nd) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, nd) for v in obj]
    return obj


def _analyze(items, cfg, jobs, stage):
    hcfg, acfg = cfg.histogram(), cfg.align()

    def run(item):
        pid, series, score, octave = item
        try:
            return pipeline.analyze_piece(pid, series, score, hcfg, acfg, octave)
        except Exception as exc:
            raise StageError(f"{stage}:{pid}", exc) from exc

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(run, items))
    return [run(it) for it in items]


def _inputs(args, cfg, key):
    paths = list(args.inputs) or list(cfg[key])
    if not paths:
        raise InputError("no input files given")
    return _expand(paths)


# ---------------------------------------------------------------------------
# commands


def cmd_histogram(args, cfg):
    paths = _inputs(args, cfg, "inputs.f0")
    items = [_load_piece(p, cfg, corrections_path=args.corrections if len(paths) == 1 else None)
             for p in paths]
    for res in _analyze(items, cfg, cfg["jobs"], "histogram"):
        base = os.path.join(args.out, res.piece_id)
        _write(base + ".histogram.csv", res.histogram.to_csv())
        _dump_json(base + ".peaks.json", _round([p.as_dict() for p in res.peaks]))
        if not args.no_svg:
            _write(base + ".histogram.svg", svgplot.histogram_svg(res.histogram, res.peaks, res.piece_id))
    return 0


def cmd_align(args, cfg):
    paths = _inputs(args, cfg, "inputs.f0")
    scores = list(cfg["inputs.scores"])
    items = []
    for k, p in enumerate(paths):
        score_path = args.score if (args.score and len(paths) == 1) else (scores[k] if k < len(scores) else None)
        items.append(_load_piece(p, cfg, score_path=score_path, want_score=True))
    for res in _analyze(items, cfg, cfg["jobs"], "align"):
        if res.path is None:
            print(f"score absent: {res.piece_id}; skipping alignment")
            continue
        base = os.path.join(args.out, res.piece_id)
        _write(base + ".alignment.csv", align.to_csv(res.series, res.path, res.score))
        for note in res.note_hists:
            _write(f"{base}.note_{note}.csv", res.note_hists[note].to_csv())
        _dump_json(base + ".peaks.json", _round([p.as_dict() for p in res.refined]))
        if not args.no_svg:
            expected = align.score_to_cents(res.score, res.anchor)
            _write(base + ".alignment.svg", svgplot.alignment_svg(res.series, res.path, expected, res.piece_id))
            names = {n: micromidi_to_name(n) for n in res.note_hists}
            _write(base + ".note_histograms.svg", svgplot.note_histograms_svg(res.note_hists, names, res.piece_id))
    return 0


def cmd_tune(args, cfg):
    paths = _inputs(args, cfg, "inputs.f0")
    items = [_load_piece(p, cfg, want_score=True) for p in paths]
    pieces = _analyze(items, cfg, cfg["jobs"], "detect")
    try:
        rr = pipeline.tune_repertoire(pieces, cfg.tuning())
    except Exception as exc:
        raise StageError("tune", exc) from exc
    out = args.out
    _write(os.path.join(out, "matrix.csv"), rr.optimized.matrix.to_csv())
    _write(os.path.join(out, "cost_trace.csv"), rr.optimized.trace.to_csv())
    _dump_json(os.path.join(out, "tuning.json"), rr.tuning.as_records())
    if not args.no_svg:
        _write(os.path.join(out, "observed_peaks.svg"), svgplot.matrix_svg(rr.optimized.matrix))
        _write(os.path.join(out, "cost_trace.svg"), svgplot.cost_trace_svg(rr.optimized.trace))
        _write(os.path.join(out, "tuning.svg"), svgplot.tuning_svg(rr.tuning))
    return 0


def cmd_synth(args, cfg):
    fluid = cfg["synth.fluid"]
    fluid = {int(k): tuple(v) for k, v in fluid.items()} if fluid else None
    gt = synthkit.make_repertoire(
        cfg["synth.n_pieces"], cfg["synth.tuning"], seed=cfg["seed"],
        offset_range=cfg["synth.offset_range"], jitter_sd=cfg["synth.jitter_sd"],
        vibrato=(cfg["synth.vibrato_depth"], cfg["synth.vibrato_rate"]),
        frames_per_degree=cfg["synth.frames_per_degree"], tonic_weight=cfg["synth.tonic_weight"],
        fluid=fluid, gap=cfg["synth.gap"],
    )
    synthkit.write_corpus(gt, args.out, jobs=cfg["jobs"])
    return 0


COMMANDS = {"histogram": cmd_histogram, "align": cmd_align, "tune": cmd_tune, "synth": cmd_synth}


def build_parser():
    parser = argparse.ArgumentParser(prog="microtune", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file with flat dotted keys")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, help="worker threads for per-piece stages")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--no-svg", action="store_true", help="skip SVG plots")
        if name != "synth":
            p.add_argument("inputs", nargs="*", help="F0 CSV files or corpus directories")
        if name == "histogram":
            p.add_argument("--corrections", help="octave correction file (single input only)")
        if name == "align":
            p.add_argument("--score", help="note table for a single input")
        if name == "tune":
            p.add_argument("-n", "--sweeps", type=int, help="maximum optimiser sweeps (tuning.n)")
            p.add_argument("-l", "--patience", type=int,
                           help="stop after this many failed trials in a row (tuning.l)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = {"jobs": args.jobs, "seed": args.seed,
                     "tuning.n": getattr(args, "sweeps", None), "tuning.l": getattr(args, "patience", None)}
        cfg = RunConfig.load(args.config, overrides)
        os.makedirs(args.out, exist_ok=True)
        _dump_json(os.path.join(args.out, f"{args.command}.run_config.json"), cfg.values)
        return COMMANDS[args.command](args, cfg)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc.filename}", file=sys.stderr)
        return 2
    except StageError as exc:
        code = 2 if isinstance(exc.exc, (InputError, ConfigError, FormatError, EmptyInputError)) else 1
        print(f"error: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # noqa: BLE001
        print(f"error [internal]: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
