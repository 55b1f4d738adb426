import json
import shutil

import numpy as np
import pytest

from microtune import synthkit
from microtune.cli import main
from microtune.ingest import parse_f0_csv


def _config(tmp_path, **keys):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(keys))
    return str(path)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    cfg = root / "synth.json"
    cfg.write_text(json.dumps({"synth.n_pieces": 4, "synth.frames_per_degree": 600, "seed": 7}))
    assert main(["synth", "--config", str(cfg), "--out", str(root / "data")]) == 0
    return root / "data"


def _files(d, pattern="*"):
    return sorted(p.name for p in d.glob(pattern))


class TestSynth:
    def test_counts(self, tmp_path):
        cfg = _config(tmp_path, **{"synth.n_pieces": 12, "synth.frames_per_degree": 50})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
        d = tmp_path / "c"
        assert len(_files(d, "*.f0.csv")) == 12
        assert len(_files(d, "*.notes.csv")) == 12
        assert (d / "ground_truth.json").exists()

    def test_same_seed_same_corpus(self, tmp_path):
        cfg = _config(tmp_path, **{"synth.n_pieces": 3, "synth.frames_per_degree": 50})
        for name in ("a", "b"):
            assert main(["synth", "--config", cfg, "--seed", "4", "--out", str(tmp_path / name)]) == 0
        for f in _files(tmp_path / "a"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_unknown_key(self, tmp_path, capsys):
        cfg = _config(tmp_path, **{"histogram.sigmaa": 3})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
        assert "histogram.sigmaa" in capsys.readouterr().err

    def test_out_of_range_value(self, tmp_path, capsys):
        cfg = _config(tmp_path, **{"histogram": {"sigma": -1}})
        assert main(["histogram", "--config", cfg, "--out", str(tmp_path / "x"), "nothing.csv"]) == 2
        assert "histogram.sigma" in capsys.readouterr().err


class TestHistogram:
    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.f0.csv"
        assert main(["histogram", "--out", str(tmp_path / "o"), str(missing)]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.f0.csv"
        bad.write_text("0.0,200\n0.1,abc\n")
        assert main(["histogram", "--out", str(tmp_path / "o"), str(bad)]) == 2
        assert "row 2" in capsys.readouterr().err

    def test_artifacts_and_apexes(self, corpus, tmp_path):
        out = tmp_path / "h"
        assert main(["histogram", "--out", str(out), str(corpus / "piece_000.f0.csv")]) == 0
        assert _files(out) == ["histogram.run_config.json", "piece_000.histogram.csv",
                               "piece_000.histogram.svg", "piece_000.peaks.json"]
        manifest = json.loads((corpus / "ground_truth.json").read_text())
        svg = (out / "piece_000.histogram.svg").read_text()
        assert svg.count('class="apex"') == len(manifest["tuning"])
        peaks = json.loads((out / "piece_000.peaks.json").read_text())
        assert {"center_cents", "lo", "hi", "mass_fraction", "type", "fit"} <= set(peaks[0])
        assert (out / "piece_000.histogram.csv").read_text().startswith("bin_center_cents,count\n")

    def test_no_svg(self, corpus, tmp_path):
        out = tmp_path / "h"
        assert main(["histogram", "--no-svg", "--out", str(out), str(corpus / "piece_001.f0.csv")]) == 0
        assert not list(out.glob("*.svg"))
        assert (out / "piece_001.peaks.json").exists()


class TestAlign:
    def test_alignment_outputs(self, corpus, tmp_path):
        out = tmp_path / "a"
        f0 = corpus / "piece_002.f0.csv"
        assert main(["align", "--out", str(out), str(f0)]) == 0
        series = parse_f0_csv(f0.read_bytes())
        # per-note CSV masses partition the voiced frames
        total = 0.0
        for path in out.glob("piece_002.note_*.csv"):
            total += np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1].sum()
        assert total == series.n_voiced
        assert (out / "piece_002.alignment.svg").exists()
        assert (out / "piece_002.note_histograms.svg").exists()

    def test_frame_agreement(self, corpus, tmp_path):
        out = tmp_path / "a"
        assert main(["align", "--no-svg", "--out", str(out), str(corpus / "piece_003.f0.csv")]) == 0
        manifest = json.loads((corpus / "ground_truth.json").read_text())
        gt = synthkit.make_repertoire(4, manifest["tuning"], seed=manifest["seed"], frames_per_degree=600)
        truth = synthkit.render_piece(gt, 3).frame_event
        rows = np.loadtxt(out / "piece_003.alignment.csv", delimiter=",", skiprows=1)
        frames = np.round(rows[:, 0] / manifest["frame_hop"]).astype(int)
        assert np.mean(rows[:, 2].astype(int) == truth[frames]) >= 0.95

    def test_score_absent(self, corpus, tmp_path, capsys):
        lone = tmp_path / "lone"
        lone.mkdir()
        shutil.copy(corpus / "piece_000.f0.csv", lone / "solo.f0.csv")
        out = tmp_path / "a"
        assert main(["align", "--out", str(out), str(lone / "solo.f0.csv")]) == 0
        assert "score absent" in capsys.readouterr().out
        assert not list(out.glob("solo.*"))


class TestTune:
    def test_outputs_and_determinism(self, corpus, tmp_path):
        runs = []
        for name in ("t1", "t2"):
            out = tmp_path / name
            assert main(["tune", "--jobs", "2", "--out", str(out), str(corpus)]) == 0
            runs.append(out)
        expected = ["cost_trace.csv", "cost_trace.svg", "matrix.csv", "observed_peaks.svg",
                    "tune.run_config.json", "tuning.json", "tuning.svg"]
        assert _files(runs[0]) == expected
        for f in expected:
            assert (runs[0] / f).read_bytes() == (runs[1] / f).read_bytes()

        trace = np.loadtxt(runs[0] / "cost_trace.csv", delimiter=",", skiprows=1)
        assert np.all(np.diff(trace[:, 1]) <= 0)

        manifest = json.loads((corpus / "ground_truth.json").read_text())
        records = json.loads((runs[0] / "tuning.json").read_text())
        means = [r["mean_cents"] for r in records]
        assert len(means) == len(manifest["tuning"])
        np.testing.assert_allclose(means, manifest["tuning"], atol=3.0)
        assert records[0]["label"] == "G2"

    def test_matrix_csv_shape(self, corpus, tmp_path):
        out = tmp_path / "t"
        assert main(["tune", "--no-svg", "--out", str(out), str(corpus)]) == 0
        lines = (out / "matrix.csv").read_text().splitlines()
        assert lines[0].startswith("piece_id,c0,")
        assert len(lines) == 1 + 4

    def test_optimiser_flags(self, corpus, tmp_path):
        out = tmp_path / "t"
        assert main(["tune", "--no-svg", "-n", "1", "--patience", "3", "--out", str(out), str(corpus)]) == 0
        cfg = json.loads((out / "tune.run_config.json").read_text())
        assert cfg["tuning.n"] == 1 and cfg["tuning.l"] == 3
        steps = np.loadtxt(out / "cost_trace.csv", delimiter=",", skiprows=1, ndmin=2)
        assert steps.shape[0] - 1 <= 2 * 4

    def test_no_inputs(self, tmp_path, capsys):
        assert main(["tune", "--out", str(tmp_path / "t")]) == 2
        assert "no input" in capsys.readouterr().err
