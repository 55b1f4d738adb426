"""
Run configuration: a JSON file of flat dotted keys, overridable from the CLI.

Nested objects are accepted and flattened, so ``{"histogram": {"sigma": 4}}``
and ``{"histogram.sigma": 4}`` mean the same thing. Unknown keys are errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .histogram import HistogramConfig
from .ingest import ConfigError, OctavePolicy
from .pipeline import AlignConfig, TuningConfig

# key -> (default, validator description, check)
_POS = ("> 0", lambda v: isinstance(v, (int, float)) and v > 0)
_NONNEG = (">= 0", lambda v: isinstance(v, (int, float)) and v >= 0)
_FRAC = ("in [0, 1)", lambda v: isinstance(v, (int, float)) and 0 <= v < 1)
_UNIT = ("in (0, 1]", lambda v: isinstance(v, (int, float)) and 0 < v <= 1)
_POSINT = ("a positive integer", lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 1)
_ANYINT = ("an integer", lambda v: isinstance(v, int) and not isinstance(v, bool))
_LIST = ("a list", lambda v: isinstance(v, list))
_OPTPOS = ("> 0 or null", lambda v: v is None or (isinstance(v, (int, float)) and v > 0))
_OPTPOSINT = ("a positive integer or null", lambda v: v is None or (isinstance(v, int) and v >= 1))
_BAND = ('"auto", null or a positive number of frames',
         lambda v: v is None or v == "auto" or (isinstance(v, (int, float)) and v > 0))
_OCTAVE = ('"auto" or "none"', lambda v: v in ("auto", "none"))
_FLUID = ("an object of degree -> [lo, hi]", lambda v: v is None or (
    isinstance(v, dict) and all(isinstance(x, list) and len(x) == 2 for x in v.values())))

SCHEMA = {
    "inputs.f0": ([], _LIST),
    "inputs.scores": ([], _LIST),
    "inputs.corrections": ([], _LIST),
    "ingest.ref_hz": (None, _OPTPOS),
    "ingest.octave_policy": ("auto", _OCTAVE),
    "ingest.octave_window": (80.0, _POS),
    "ingest.octave_min_run": (3, _POSINT),
    "histogram.bin_width": (1.0, _POS),
    "histogram.sigma": (6.0, _NONNEG),
    "histogram.min_mass_fraction": (0.01, _FRAC),
    "histogram.prominence": (0.02, _FRAC),
    "histogram.valley_split": (0.25, _FRAC),
    "histogram.valley_ratio": (0.85, _UNIT),
    "histogram.plateau_level": (0.95, _UNIT),
    "histogram.plateau_width": (30.0, _POS),
    "histogram.secondary_window": (50.0, _POS),
    "histogram.rmse_gate": (0.15, _POS),
    "align.band": ("auto", _BAND),
    "align.cost_cap": (600.0, _POS),
    "align.dominance": (0.8, _UNIT),
    "align.min_share": (0.2, _UNIT),
    "tuning.link_threshold": (50.0, _POS),
    "tuning.n": (1000, _POSINT),
    "tuning.l": (None, _OPTPOSINT),
    "tuning.min_support": (1, _POSINT),
    "tuning.fluid_stdev": (12.0, _POS),
    "synth.n_pieces": (12, _POSINT),
    "synth.tuning": ([0.0, 150.0, 300.0, 500.0, 700.0, 850.0, 1000.0], _LIST),
    "synth.offset_range": (40.0, _NONNEG),
    "synth.jitter_sd": (15.0, _NONNEG),
    "synth.vibrato_depth": (0.0, _NONNEG),
    "synth.vibrato_rate": (0.0, _NONNEG),
    "synth.frames_per_degree": (2000, _POSINT),
    "synth.tonic_weight": (2.0, _POS),
    "synth.fluid": (None, _FLUID),
    "synth.gap": (0.1, _NONNEG),
    "seed": (0, _ANYINT),
    "jobs": (1, _POSINT),
}


def flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        # synth.fluid is itself a mapping value, not a namespace
        if isinstance(v, dict) and key not in SCHEMA:
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (d, _) in SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def load(cls, path=None, overrides=None):
        cfg = cls()
        if path is not None:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: top level must be an object")
            cfg.update(flatten(data))
        if overrides:
            cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cfg

    def update(self, items):
        for key, value in items.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            desc, check = SCHEMA[key][1]
            if isinstance(value, int) and not isinstance(value, bool) and desc.startswith(">"):
                value = float(value)
            if not check(value):
                raise ConfigError(f"config key {key!r} must be {desc}, got {value!r}")
            self.values[key] = value

    def histogram(self):
        v = self.values
        return HistogramConfig(
            bin_width=v["histogram.bin_width"], sigma=v["histogram.sigma"],
            min_prominence_fraction=v["histogram.prominence"], valley_split=v["histogram.valley_split"],
            min_mass_fraction=v["histogram.min_mass_fraction"], valley_ratio=v["histogram.valley_ratio"],
            plateau_level=v["histogram.plateau_level"], plateau_width=v["histogram.plateau_width"],
            secondary_window=v["histogram.secondary_window"], rmse_gate=v["histogram.rmse_gate"],
        )

    def align(self):
        v = self.values
        return AlignConfig(band=v["align.band"], cost_cap=v["align.cost_cap"],
                           dominance=v["align.dominance"], min_share=v["align.min_share"])

    def tuning(self):
        v = self.values
        return TuningConfig(link_threshold=v["tuning.link_threshold"], n=v["tuning.n"], l=v["tuning.l"],
                            min_support=v["tuning.min_support"], fluid_stdev=v["tuning.fluid_stdev"])

    def octave(self):
        v = self.values
        if v["ingest.octave_policy"] == "none":
            return None
        return OctavePolicy("auto", v["ingest.octave_window"], v["ingest.octave_min_run"])
