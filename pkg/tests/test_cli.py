import json
import re

import numpy as np
import pytest

from ibtm.cli import main
from ibtm.corpus import load_corpus
from ibtm.model import load_model, save_model

from helpers import separable_model


@pytest.fixture(scope="module")
def synth_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth") / "corpus.jsonl"
    code = main(["synth", "--out", str(path), "--m", "40", "--k", "3",
                 "--t", "1", "--s", "1", "--v", "12", "--l-vocab", "9",
                 "--n-words", "25", "--n-labels", "2", "--seed", "7"])
    assert code == 0
    return path


def train_args(corpus_path, model_path, seed=1):
    return ["train", "--corpus", str(corpus_path), "--model", str(model_path),
            "--k", "3", "--t", "1", "--s", "1", "--v", "12",
            "--seed", str(seed), "--max-sweeps", "12"]


class TestSynth:
    def test_writes_requested_number_of_records(self, synth_corpus):
        corpus = load_corpus(synth_corpus)
        assert corpus.m == 40
        assert all(len(d.points) == 25 for d in corpus)

    def test_missing_out_flag_is_usage_error(self):
        assert main(["synth", "--m", "5"]) == 2


class TestTrain:
    def test_trains_and_prints_nondecreasing_trace(self, synth_corpus,
                                                   tmp_path, capsys):
        model_path = tmp_path / "model.bin"
        code = main(train_args(synth_corpus, model_path))
        out = capsys.readouterr().out
        assert code == 0
        assert model_path.exists()
        bounds = [float(m) for m in re.findall(r"elbo (-?\d+\.\d+)", out)]
        assert len(bounds) >= 2
        diffs = np.diff(np.array(bounds[:-1]))  # last line repeats the final bound
        assert (diffs >= -1e-8 * np.abs(np.array(bounds[:-2]))).all()
        model = load_model(model_path)
        assert model.config.k == 3
        assert model.label_vocab.size == 9

    def test_missing_corpus_is_exit_2_naming_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.jsonl"
        code = main(["train", "--corpus", str(missing),
                     "--model", str(tmp_path / "m.bin")])
        assert code == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_fixed_seed_gives_byte_identical_model_files(self, synth_corpus,
                                                         tmp_path):
        a = tmp_path / "a.bin"
        b = tmp_path / "b.bin"
        assert main(train_args(synth_corpus, a, seed=9)) == 0
        assert main(train_args(synth_corpus, b, seed=9)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_config_file_with_flag_override(self, synth_corpus, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"corpus = {synth_corpus}\nk = 2\nt = 1\ns = 1\n"
                       f"v = 12\nmax_sweeps = 4\nseed = 1\n")
        model_path = tmp_path / "m.bin"
        code = main(["train", "--config", str(cfg), "--model", str(model_path),
                     "--k", "4"])
        assert code == 0
        assert load_model(model_path).config.k == 4  # flag wins over file


class TestPredictCommand:
    def test_one_point_drawing_prints_five_labels(self, tmp_path, capsys):
        model_path = tmp_path / "model.bin"
        save_model(separable_model(k=3, labels_per_topic=2), model_path)
        drawing = tmp_path / "drawing.jsonl"
        drawing.write_text(json.dumps(
            {"id": "q1",
             "points": [{"view": "front", "x": 0.5, "y": 0.5, "intensity": 1.0}],
             "labels": []}) + "\n")
        code = main(["predict", "--model", str(model_path),
                     "--corpus", str(drawing)])
        out = capsys.readouterr().out
        assert code == 0
        assert "budget 5" in out
        assert len(re.findall(r"^  \d\.\d{6}  ", out, re.M)) == 5

    def test_corrupt_model_file_fails_cleanly(self, tmp_path, capsys):
        model_path = tmp_path / "model.bin"
        save_model(separable_model(), model_path)
        raw = bytearray(model_path.read_bytes())
        raw[40] ^= 0xFF
        model_path.write_bytes(bytes(raw))
        drawing = tmp_path / "d.jsonl"
        drawing.write_text(json.dumps(
            {"id": "q", "points": [{"view": "front", "x": 0.5, "y": 0.5}]}) + "\n")
        code = main(["predict", "--model", str(model_path),
                     "--corpus", str(drawing)])
        assert code == 1
        assert "CRC" in capsys.readouterr().err


class TestGenerateCommand:
    def test_writes_svg(self, tmp_path):
        model_path = tmp_path / "model.bin"
        save_model(separable_model(k=3, labels_per_topic=2), model_path)
        out = tmp_path / "drawing.svg"
        code = main(["generate", "--model", str(model_path),
                     "--label", "lab-02", "--out", str(out)])
        assert code == 0
        assert out.read_bytes().startswith(b"<?xml")

    def test_unknown_label_fails(self, tmp_path, capsys):
        model_path = tmp_path / "model.bin"
        save_model(separable_model(), model_path)
        code = main(["generate", "--model", str(model_path),
                     "--label", "bogus", "--out", str(tmp_path / "x.svg")])
        assert code == 1
        assert "bogus" in capsys.readouterr().err


class TestEvaluateCommand:
    def test_writes_report_and_summary(self, synth_corpus, tmp_path, capsys):
        out = tmp_path / "report.tsv"
        code = main(["evaluate", "--corpus", str(synth_corpus),
                     "--out", str(out), "--splits", "2", "--seeds", "1",
                     "--k", "3", "--t", "1", "--s", "1", "--v", "10",
                     "--max-sweeps", "6", "--seed", "0"])
        stdout = capsys.readouterr().out
        assert code == 0
        text = out.read_text()
        assert text.splitlines()[0] == "split\tseed\tF"
        match = re.search(r"F = (\d\.\d{4}) ± (\d\.\d{4})", text)
        assert match is not None
        assert match.group(0) in stdout
