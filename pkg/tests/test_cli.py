"""Command-line interface: subcommands, config files, exit codes."""

import numpy as np
import pytest

from probdiar.cli import run
from probdiar.extractor import ExtractorModel, PrecisionNet
from probdiar.io import load_corpus, load_model, save_model
from probdiar.plda import DiagPlda


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A tiny simulated corpus plus a trained model, shared by CLI tests."""
    d = tmp_path_factory.mktemp("cli")
    corpus = d / "corpus.tsv"
    rttm = d / "ref.rttm"
    model = d / "model.txt"
    assert run(["simulate", "--out", str(corpus), "--rttm", str(rttm),
                "--recordings", "6", "--segments", "10", "--dim", "4",
                "--seed", "1"]) == 0
    assert run(["train", "--corpus", str(corpus), "--out", str(model),
                "--n", "4", "--epochs", "2", "--history",
                str(d / "history.tsv")]) == 0
    return d


class TestSimulate:
    def test_outputs(self, workdir):
        recs = load_corpus(workdir / "corpus.tsv")
        assert len(recs) == 6
        assert all(len(r.records) == 10 for r in recs)
        assert (workdir / "ref.rttm").read_text().startswith("SPEAKER")


class TestTrain:
    def test_model_loads(self, workdir):
        model, plda = load_model(workdir / "model.txt")
        assert model.raw_dim == 4
        assert plda.dim == 4

    def test_history_written(self, workdir):
        lines = (workdir / "history.tsv").read_text().splitlines()
        assert lines[0] == "epoch\ttrain_ce\theldout_ce"
        assert len(lines) == 3


class TestDiarize:
    def test_writes_rttm(self, workdir, capsys):
        out = workdir / "hyp.rttm"
        assert run(["diarize", "--corpus", str(workdir / "corpus.tsv"),
                    "--model", str(workdir / "model.txt"), "--out", str(out),
                    "--mode", "book", "--sigma", "0"]) == 0
        assert out.read_text().startswith("SPEAKER")

    def test_single_segment_recording(self, tmp_path, workdir):
        corpus = tmp_path / "one.tsv"
        corpus.write_text("solo\ts0\t0.0\t1.5\t0.1,0.2,0.3,0.4\t0.5,1.5\t1\n")
        out = tmp_path / "hyp.rttm"
        assert run(["diarize", "--corpus", str(corpus),
                    "--model", str(workdir / "model.txt"), "--out", str(out),
                    "--mode", "book", "--sigma", "0"]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 and lines[0].split()[1] == "solo"

    def test_baseline_mode(self, workdir, tmp_path):
        out = tmp_path / "hyp.rttm"
        assert run(["diarize", "--corpus", str(workdir / "corpus.tsv"),
                    "--model", str(workdir / "model.txt"), "--out", str(out),
                    "--mode", "baseline"]) == 0
        assert out.exists()


class TestScore:
    def test_perfect_score(self, workdir, capsys):
        assert run(["score", "--ref", str(workdir / "ref.rttm"),
                    "--hyp", str(workdir / "ref.rttm")]) == 0
        out = capsys.readouterr().out
        assert "OVERALL" in out
        assert "0.0000" in out

    def test_missing_recording_is_data_error(self, workdir, tmp_path, capsys):
        hyp = tmp_path / "partial.rttm"
        lines = (workdir / "ref.rttm").read_text().splitlines()
        hyp.write_text("\n".join(ln for ln in lines
                                 if ln.split()[1] != "rec0000") + "\n")
        assert run(["score", "--ref", str(workdir / "ref.rttm"),
                    "--hyp", str(hyp)]) == 2
        assert "[data]" in capsys.readouterr().err

    def test_report_file(self, workdir, tmp_path):
        out = tmp_path / "report.tsv"
        assert run(["score", "--ref", str(workdir / "ref.rttm"),
                    "--hyp", str(workdir / "ref.rttm"), "--out", str(out)]) == 0
        assert out.read_text().splitlines()[-1].startswith("OVERALL")


class TestSweep:
    def test_table_columns(self, workdir, capsys):
        assert run(["sweep", "--corpus", str(workdir / "corpus.tsv"),
                    "--eval-corpus", str(workdir / "corpus.tsv"),
                    "--model", str(workdir / "model.txt"),
                    "--param", "sigma", "--values=-2,0,2"]) == 0
        out = capsys.readouterr().out
        header = out.splitlines()[0].split()
        assert header == ["sigma", "dev", "eval"]
        assert len(out.splitlines()) == 5  # header + 3 rows + best line
        assert out.splitlines()[-1].startswith("best sigma")


class TestConfigFile:
    def test_values_applied(self, workdir, tmp_path):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("# comment\nsigma = 1.5\nmode = book\n")
        out = tmp_path / "hyp.rttm"
        assert run(["diarize", "--config", str(cfg),
                    "--corpus", str(workdir / "corpus.tsv"),
                    "--model", str(workdir / "model.txt"),
                    "--out", str(out)]) == 0

    def test_unknown_key_rejected(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("not_a_key = 1\n")
        assert run(["diarize", "--config", str(cfg),
                    "--corpus", str(workdir / "corpus.tsv"),
                    "--model", str(workdir / "model.txt"),
                    "--out", str(tmp_path / "h.rttm")]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_explicit_flag_wins(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("values = 0\n")
        assert run(["sweep", "--config", str(cfg),
                    "--corpus", str(workdir / "corpus.tsv"),
                    "--model", str(workdir / "model.txt"),
                    "--param", "sigma", "--values=-1,1"]) == 0
        out = capsys.readouterr().out
        assert len(out.splitlines()) == 4  # two grid rows, not one


class TestErrorsAndUsage:
    def test_no_subcommand(self, capsys):
        assert run([]) == 1
        capsys.readouterr()

    def test_unknown_flag(self, capsys):
        assert run(["diarize", "--nope"]) == 1
        capsys.readouterr()

    def test_missing_corpus_file(self, tmp_path, workdir, capsys):
        assert run(["diarize", "--corpus", str(tmp_path / "absent.tsv"),
                    "--model", str(workdir / "model.txt"),
                    "--out", str(tmp_path / "h.rttm")]) == 2
        capsys.readouterr()

    def test_corrupt_model_file(self, workdir, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("format_version 1\nnot a model\n")
        assert run(["diarize", "--corpus", str(workdir / "corpus.tsv"),
                    "--model", str(bad),
                    "--out", str(tmp_path / "h.rttm")]) == 2
        capsys.readouterr()


class TestSelftest:
    def test_passes(self, capsys):
        assert run(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "selftest passed" in out
